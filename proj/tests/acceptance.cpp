/*
 * Copyright 2026 The guidex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [N ...] [--work DIR]
//
// With no numbers every criterion runs. Work files (datasets, runs, score
// CSVs, reports) stay under DIR, default ./acceptance_work.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/config.hpp"
#include "core/errors.hpp"
#include "core/flow.hpp"
#include "core/log.hpp"
#include "core/losses.hpp"
#include "core/memory.hpp"
#include "core/model.hpp"
#include "core/rng.hpp"
#include "core/scoring.hpp"
#include "core/synthdata.hpp"
#include "core/tokenizer.hpp"
#include "core/trainer.hpp"

#ifndef GUIDEX_SOURCE_DIR
#error "GUIDEX_SOURCE_DIR must point at the source tree"
#endif

namespace fs = std::filesystem;
using namespace guidex;

namespace {

fs::path g_work = "acceptance_work";

// Collects failure messages; a criterion passes when none were recorded.
struct Verdict {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
  bool passed() const { return failures.empty(); }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------- flow ---

struct PerturbedFlow {
  nn::ParamRegistry reg;
  PoseFlow flow;

  PerturbedFlow(const FlowConfig& fc, std::uint64_t seed, double spread) {
    Rng rng(seed);
    flow = PoseFlow(reg, "flow", fc, rng);
    for (const auto& p : reg.all()) {
      ag::Var v = p.var;
      for (double& x : v.mutable_value()) x += spread * rng.normal();
    }
  }
};

std::vector<double> random_pose(const FlowConfig& fc, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(fc.frames * fc.joints * fc.channels));
  for (double& v : x) v = rng.uniform();
  return x;
}

ag::Var pose_var(const FlowConfig& fc, const std::vector<double>& x) {
  return ag::Var::constant({fc.frames * fc.joints, fc.channels}, x);
}

double numerical_logdet(const PoseFlow& flow, const FlowConfig& fc, const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd J(n, n);
  const double h = 1e-6;
  for (int j = 0; j < n; ++j) {
    auto up = x, down = x;
    up[j] += h;
    down[j] -= h;
    const auto zu = flow.forward(pose_var(fc, up)).latent.value();
    const auto zd = flow.forward(pose_var(fc, down)).latent.value();
    for (int i = 0; i < n; ++i) J(i, j) = (zu[i] - zd[i]) / (2 * h);
  }
  return std::log(std::abs(J.fullPivLu().determinant()));
}

Verdict criterion_flow() {
  Verdict v;
  ag::NoGradGuard ng;
  FlowConfig fc;
  fc.edges = {{0, 1}, {1, 2}, {1, 3}, {1, 4}, {4, 5}, {5, 6}, {5, 7}};
  double worst = 0.0;
  // Parameter spread 0 is the initial state; the others stand in for
  // arbitrary training states.
  for (double spread : {0.0, 0.1, 0.3, 0.6}) {
    PerturbedFlow pf(fc, 100 + static_cast<std::uint64_t>(spread * 10), spread);
    Rng rng(derive_seed(1, "acceptance.flow", static_cast<std::uint64_t>(spread * 10)));
    for (int n = 0; n < 100; ++n) {
      const auto x = random_pose(fc, rng);
      const auto back = pf.flow.inverse(pf.flow.forward(pose_var(fc, x)).latent.value());
      for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
    }
  }
  v.require(worst < 1e-4, "round-trip error " + fmt("%.3g", worst));
  v.note("round-trip max " + fmt("%.2e", worst));

  FlowConfig small;
  small.frames = 2;
  small.joints = 3;
  small.channels = 2;
  small.steps = 3;
  small.hidden = 5;
  double worst_rel = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PerturbedFlow pf(small, seed, 0.5);
    Rng rng(derive_seed(seed, "acceptance.logdet"));
    const auto x = random_pose(small, rng);
    const double analytic = pf.flow.forward(pose_var(small, x)).logdet.item();
    const double numeric = numerical_logdet(pf.flow, small, x);
    worst_rel = std::max(worst_rel, std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-3));
  }
  v.require(worst_rel < 1e-3, "logdet relative error " + fmt("%.3g", worst_rel));
  v.note("logdet rel max " + fmt("%.2e", worst_rel));
  return v;
}

// ------------------------------------------------------------ gradients ---

Verdict criterion_gradients() {
  Verdict v;
  double worst = 0.0;
  std::set<std::string> groups;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rep = grad_check("all", 1e-3, seed);
    for (const auto& e : rep.entries) {
      worst = std::max(worst, e.max_rel_error);
      groups.insert(e.tensor.substr(0, e.tensor.find('.')));
      if (!(e.max_rel_error < 1e-3)) {
        v.require(false, "seed " + std::to_string(seed) + " " + e.tensor + " under " + e.objective + " rel " +
                             fmt("%.3g", e.max_rel_error));
      }
    }
  }
  for (const char* g :
       {"flow", "rgb_encoder", "motion_head", "behavior_projection", "mask_encoder", "mask_projection", "memory"}) {
    v.require(groups.count(g) == 1, std::string("no tensors checked for ") + g);
  }
  v.note("max rel " + fmt("%.2e", worst) + " over " + std::to_string(groups.size()) + " module groups, 5 seeds");
  return v;
}

// ------------------------------------------------------------- examples ---

ag::Var row(std::vector<double> x) {
  const int n = static_cast<int>(x.size());
  return ag::Var::constant({1, n}, std::move(x));
}

Verdict criterion_examples() {
  Verdict v;
  auto near = [&](double got, double want, double tol, const std::string& what) {
    v.require(std::abs(got - want) <= tol, what + ": got " + fmt("%.12g", got) + " want " + fmt("%.12g", want));
  };
  const double r2 = std::sqrt(2.0);

  // Motion loss.
  near(loss_motion(row({0.3, -1.2}), row({0.3, -1.2})).item(), 0.0, 1e-9, "L_mo equal");
  near(loss_motion(row({1, 0}), row({0, 1})).item(), 2.0, 1e-9, "L_mo [1,0] vs [0,1]");
  {
    // Batch mean over two clips: d/df_rgb = 2 (f_rgb - f_sk) / batch.
    const std::vector<double> sk1{0.2, -0.4, 1.0}, sk2{1.5, 0.0, -0.3};
    auto g1 = ag::Var::parameter({1, 3}, {0.7, 0.1, -0.2});
    auto g2 = ag::Var::parameter({1, 3}, {-0.5, 0.9, 0.4});
    const auto L = ag::scale(ag::add(loss_motion(row(sk1), g1), loss_motion(row(sk2), g2)), 0.5);
    L.backward();
    for (int i = 0; i < 3; ++i) {
      near(g1.grad()[i], 2 * (g1.value()[i] - sk1[i]) / 2, 1e-9, "dL_mo/df_rgb");
      near(g2.grad()[i], 2 * (g2.value()[i] - sk2[i]) / 2, 1e-9, "dL_mo/df_rgb");
    }
  }
  // Appearance loss.
  const auto u = row({0.5, -2, 1});
  near(loss_appearance(u, u).item(), 0.0, 1e-9, "L_app equal");
  near(loss_appearance(row({1, 0, 0}), row({0, 3, 0})).item(), 1.0, 1e-9, "L_app orthogonal");
  near(loss_appearance(ag::scale(u, -1.0), u).item(), 2.0, 1e-9, "L_app opposite");

  // Motion score.
  const std::vector<double> a{1, 0}, b{0, 1}, na{-1, 0};
  const std::vector<double> p{0.3, -1.1, 2.0}, q{-0.7, 0.4, 0.25};
  near(score_motion(p, p), 0.0, 1e-9, "S_mo equal");
  near(score_motion(a, b), r2, 1e-9, "S_mo [1,0] vs [0,1]");
  near(score_motion(p, q), score_motion(q, p), 1e-12, "S_mo symmetry");
  // Appearance score.
  near(score_appearance(u.value(), u.value(), u.value(), 3), 0.0, 1e-9, "S_app equal");
  near(score_appearance(a, b, b, 2), 1.0, 1e-9, "S_app both orthogonal");
  near(score_appearance(a, a, na, 2), 1.0, 1e-9, "S_app (0+2)/2");
  // Scene score.
  near(score_scene(a, a), 0.0, 1e-9, "S_mm equal");
  near(score_scene(a, b), r2, 1e-9, "S_mm [1,0] vs [0,1]");
  {
    Rng rng(5);
    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
      const int len = rng.uniform_int(2, 12);
      std::vector<double> c1(static_cast<std::size_t>(len)), c2(static_cast<std::size_t>(len));
      double s1 = 0, s2 = 0;
      for (int i = 0; i < len; ++i) {
        c1[i] = rng.uniform() * (rng.bernoulli(0.3) ? 0.0 : 1.0);
        c2[i] = rng.uniform() * (rng.bernoulli(0.3) ? 0.0 : 1.0);
        s1 += c1[i];
        s2 += c2[i];
      }
      c1[0] += 1e-3;
      c2[len - 1] += 1e-3;
      s1 += 1e-3;
      s2 += 1e-3;
      for (int i = 0; i < len; ++i) {
        c1[i] /= s1;
        c2[i] /= s2;
      }
      worst = std::max(worst, score_scene(c1, c2));
    }
    v.require(worst <= r2 + 1e-9, "S_mm exceeds sqrt(2) for probability vectors");
  }

  // Combination and normalization.
  {
    Rng rng(6);
    std::vector<ClipScore> clips(40);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      clips[i].video_id = static_cast<int>(i % 3);
      clips[i].start = static_cast<int>(i);
      clips[i].s_mo = rng.uniform() * 5;
      clips[i].s_app = rng.uniform();
      clips[i].s_mm = rng.uniform();
    }
    const auto norm = normalize_scores(clips, combine_raw(clips, {0.0, 0.0}), "global");
    bool same_order = true;
    for (std::size_t i = 0; i < clips.size(); ++i)
      for (std::size_t j = 0; j < clips.size(); ++j)
        same_order &= (clips[i].s_mo < clips[j].s_mo) == (norm[i] < norm[j]);
    v.require(same_order, "lambda=0 ranking differs from S_mo ranking");
    const std::vector<double> raw13{1, 3};
    const auto mm = min_max(raw13);
    v.require(mm[0] == 0.0 && mm[1] == 1.0, "min-max {1,3} != {0,1}");
    const auto raw = combine_raw(clips, {1.0, 0.5});
    const auto scaled = normalize_scores(clips, raw, "global");
    v.require(std::max_element(raw.begin(), raw.end()) - raw.begin() ==
                  std::max_element(scaled.begin(), scaled.end()) - scaled.begin(),
              "normalization moved the argmax clip");
    v.require(*std::min_element(scaled.begin(), scaled.end()) == 0.0 &&
                  *std::max_element(scaled.begin(), scaled.end()) == 1.0,
              "normalized scores do not span [0,1]");
  }

  // Addressing and matching reproduce softmax(1, 0).
  {
    const auto w = address(row({2, 0, 0}), ag::Var::constant({2, 3}, {1, 0, 0, 0, 1, 0}));
    near(w.at(0), 0.7311, 1e-4, "address slot 1");
    near(w.at(1), 0.2689, 1e-4, "address slot 2");
    nn::ParamRegistry reg;
    MatchingMemory m(reg, "match", 2, 2, 2, 1);
    m.bank().slots().mutable_value() = {1, 0, 0.3, 0.4, 0, 1, 0.3, 0.4};
    const auto c = m.match(std::vector<double>{5, 0}, Segment::kBehavior);
    near(c[0], 0.7311, 1e-4, "match slot 1");
    near(c[1], 0.2689, 1e-4, "match slot 2");
  }
  v.note(std::to_string(v.failures.size()) + " mismatches");
  return v;
}

// ----------------------------------------------------------------- masks ---

Verdict criterion_masks() {
  Verdict v;
  // Default clip geometry with a small network; the mask algebra only
  // depends on the token grid.
  ModelShape shape;
  shape.dim = 16;
  shape.depth = 1;
  shape.heads = 2;
  shape.c_b = shape.c_app = shape.c_s = shape.head_hidden = 8;
  shape.l_lsta = 1;
  shape.n_b = shape.n_s = shape.n_r = 4;
  shape.flow_steps = 2;
  shape.flow_hidden = 4;
  const GridShape grid = shape.grid();
  const Model model(shape, 3);
  const int T = shape.T, H = shape.H, W = shape.W;
  int bad_partition = 0, bad_temporal = 0, bad_insensitive = 0, bad_sensitive = 0;
  ag::NoGradGuard ng;
  for (int n = 0; n < 1000; ++n) {
    Rng rng(derive_seed(2026, "acceptance.mask", static_cast<std::uint64_t>(n)));
    const MaskPair m = sample_block_mask(grid, 0.5, rng);

    std::vector<int> seen(static_cast<std::size_t>(grid.tokens()), 0);
    for (int i : m.mask) seen[i]++;
    for (int i : m.complement) seen[i]++;
    bad_partition += std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; });
    std::set<int> on(m.mask.begin(), m.mask.end());
    bool temporal = true;
    for (int i = 0; i < grid.tokens(); ++i) {
      const bool masked = on.count(i) != 0;
      temporal &= masked == (m.spatial[static_cast<std::size_t>(i % grid.spatial())] != 0);
    }
    bad_temporal += !temporal;

    // Rewrite every pixel inside a masked cube; f_m must not move.
    std::vector<double> rgb(static_cast<std::size_t>(T) * H * W * 3);
    for (double& x : rgb) x = rng.uniform();
    std::vector<double> other = rgb;
    for (int idx : m.mask) {
      const int ti = idx / grid.spatial(), yi = (idx % grid.spatial()) / grid.w, xi = idx % grid.w;
      for (int t = ti * kCubeT; t < (ti + 1) * kCubeT; ++t)
        for (int y = yi * kCubeS; y < (yi + 1) * kCubeS; ++y)
          for (int x = xi * kCubeS; x < (xi + 1) * kCubeS; ++x)
            for (int c = 0; c < 3; ++c) other[((static_cast<std::size_t>(t) * H + y) * W + x) * 3 + c] = rng.uniform();
    }
    std::vector<double> pose(static_cast<std::size_t>(T * shape.V * shape.C), 0.5);
    std::vector<double> scene(static_cast<std::size_t>(H * W * 3), 0.5);
    const ClipInput a{ag::Var::constant({T * shape.V, shape.C}, pose), cube_features(rgb, T, H, W, 3), scene};
    const ClipInput b{ag::Var::constant({T * shape.V, shape.C}, pose), cube_features(other, T, H, W, 3), scene};
    bad_insensitive += model.masked_latent(a, m.mask).value() != model.masked_latent(b, m.mask).value();
    // Sanity on a few seeds: the complement sees the rewritten pixels.
    if (n % 100 == 0) {
      bad_sensitive += model.masked_latent(a, m.complement).value() == model.masked_latent(b, m.complement).value();
    }
  }
  v.require(bad_partition == 0, std::to_string(bad_partition) + " masks are not partitions");
  v.require(bad_temporal == 0, std::to_string(bad_temporal) + " masks vary over time");
  v.require(bad_insensitive == 0, std::to_string(bad_insensitive) + " f_m changed under masked pixels");
  v.require(bad_sensitive == 0, "complement branch ignored visible pixels");
  v.note("1000 seeds, grid " + std::to_string(grid.t) + "x" + std::to_string(grid.h) + "x" + std::to_string(grid.w));
  return v;
}

// ---------------------------------------------------------------- memory ---

Config tiny_pipeline_config() {
  Config cfg = Config::defaults();
  for (const char* kv :
       {"world.train_videos=4", "world.test_videos=6", "world.video_length=16", "world.frame_height=32",
        "world.frame_width=32", "model.dim=16", "model.depth=1", "model.heads=2", "model.c_b=8", "model.c_app=8",
        "model.c_s=8", "model.head_hidden=8", "model.l_lsta=1", "model.n_b=4", "model.n_s=4", "model.n_r=4",
        "model.flow_steps=2", "model.flow_hidden=4", "flow.epochs=2", "flow.stride=4", "flow.batch=4",
        "train.epochs=2", "train.stride=4", "train.batch=4"}) {
    cfg.apply_override(kv);
  }
  return cfg;
}

Verdict criterion_memory() {
  Verdict v;
  Rng rng(derive_seed(2026, "acceptance.memory"));
  auto random_matrix = [&](int r, int c) {
    std::vector<double> x(static_cast<std::size_t>(r * c));
    for (double& e : x) e = rng.normal();
    return ag::Var::constant({r, c}, x);
  };
  double worst_row = 0.0, worst_scale = 0.0;
  ag::NoGradGuard ng;
  for (int n = 0; n < 500; ++n) {
    const int slots = rng.uniform_int(2, 24), dim = rng.uniform_int(2, 16), rows = rng.uniform_int(1, 6);
    const auto m = random_matrix(slots, dim), q = random_matrix(rows, dim);
    const auto w = address(q, m);
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int i = 0; i < slots; ++i) s += w.at(static_cast<std::size_t>(r * slots + i));
      worst_row = std::max(worst_row, std::abs(s - 1.0));
    }
    const double c = 0.01 + 100.0 * rng.uniform();
    const auto ws = address(ag::scale(q, c), m);
    for (std::size_t i = 0; i < w.size(); ++i) worst_scale = std::max(worst_scale, std::abs(ws.at(i) - w.at(i)));
  }
  double worst_match = 0.0, worst_norm = 0.0;
  {
    nn::ParamRegistry reg;
    MatchingMemory mr(reg, "memory.matching", 9, 12, 4, 2);
    for (int n = 0; n < 500; ++n) {
      for (const auto seg : {Segment::kBehavior, Segment::kScene}) {
        std::vector<double> q(seg == Segment::kBehavior ? 12 : 4);
        for (double& x : q) x = rng.uniform();
        double s = 0;
        for (double p : mr.match(q, seg)) s += p;
        worst_match = std::max(worst_match, std::abs(s - 1.0));
      }
    }
    mr.begin_final_round();
    for (int round = 0; round < 50; ++round) {
      std::vector<std::vector<double>> qs(static_cast<std::size_t>(rng.uniform_int(1, 10)), std::vector<double>(16));
      for (auto& q : qs)
        for (double& x : q) x = rng.uniform();
      mr.update(qs);
      const auto& s = mr.bank().slots().value();
      for (int i = 0; i < 9; ++i) {
        double sq = 0;
        for (int j = 0; j < 16; ++j) sq += s[i * 16 + j] * s[i * 16 + j];
        worst_norm = std::max(worst_norm, std::abs(std::sqrt(sq) - 1.0));
      }
    }
    mr.end_final_round();
    bool refused = false;
    try {
      mr.update({std::vector<double>(16, 1.0)});
    } catch (const StageError&) {
      refused = true;
    }
    v.require(refused, "matching update accepted outside the final round");
  }
  v.require(worst_row <= 1e-6, "address row sum off by " + fmt("%.3g", worst_row));
  v.require(worst_match <= 1e-6, "match row sum off by " + fmt("%.3g", worst_match));
  v.require(worst_scale <= 1e-9, "addressing moved under query scaling by " + fmt("%.3g", worst_scale));
  v.require(worst_norm <= 1e-9, "slot norm drifted by " + fmt("%.3g", worst_norm));

  // Behaviour and scene banks through a real final round.
  const fs::path root = g_work / "memory";
  fs::remove_all(root);
  const Config cfg = tiny_pipeline_config();
  const auto ds = synth::generate_world(synth::WorldConfig::from_config(cfg), root / "data");
  run_flow_stage(cfg, ds, root / "run");
  run_joint_stage(cfg, ds, root / "run");
  run_final_stage(cfg, ds, root / "run");
  const Model joint = load_stage_model(cfg, root / "run", kStageJoint);
  const Model final = load_stage_model(cfg, root / "run", kStageFinal);
  v.require(joint.behavior_memory.hash() == final.behavior_memory.hash(), "M^b changed in the final round");
  v.require(joint.scene_memory.hash() == final.scene_memory.hash(), "M^s changed in the final round");
  v.require(joint.matching_memory.bank().hash() != final.matching_memory.bank().hash(),
            "final round left M^r untouched");
  v.note("row err " + fmt("%.1e", std::max(worst_row, worst_match)) + ", scale err " + fmt("%.1e", worst_scale) +
         ", norm err " + fmt("%.1e", worst_norm));
  return v;
}

// ------------------------------------------------------------------- AUC ---

Verdict criterion_auc() {
  Verdict v;
  Rng rng(derive_seed(2026, "acceptance.auc"));
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const int len = rng.uniform_int(2, 200);
    const double levels = rng.bernoulli(0.5) ? 6.0 : 1e6;  // coarse grids force ties
    std::vector<double> s(static_cast<std::size_t>(len));
    std::vector<int> l(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
      s[i] = std::round(rng.uniform() * levels) / levels;
      l[i] = rng.bernoulli(0.3);
    }
    l[0] = 1;
    l[1] = 0;
    double num = 0.0, pairs = 0.0;
    for (int i = 0; i < len; ++i) {
      if (!l[i]) continue;
      for (int j = 0; j < len; ++j) {
        if (l[j]) continue;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        pairs += 1.0;
      }
    }
    worst = std::max(worst, std::abs(auc(s, l) - num / pairs));
  }
  v.require(worst <= 1e-9, "rank AUC differs from pair counting by " + fmt("%.3g", worst));
  v.note("max diff " + fmt("%.1e", worst));
  return v;
}

// ------------------------------------------------------------ end to end ---

Config acceptance_config(std::uint64_t seed) {
  Config cfg = Config::defaults();
  cfg.load_file(std::string(GUIDEX_SOURCE_DIR) + "/configs/acceptance.toml");
  cfg.set("seed", static_cast<std::int64_t>(seed));
  return cfg;
}

struct PipelineRun {
  std::string dataset_hash;
  std::vector<double> flow_loss, joint_loss;
  fs::path test_csv, train_csv;
  nlohmann::json summary;
  double seconds = 0.0;
};

PipelineRun run_pipeline(const Config& cfg, const fs::path& root) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(root);
  PipelineRun r;
  const auto ds = synth::generate_world(synth::WorldConfig::from_config(cfg), root / "data");
  r.dataset_hash = ds.content_hash();
  const fs::path run = root / "run";
  r.flow_loss = run_flow_stage(cfg, ds, run).step_loss;
  r.joint_loss = run_joint_stage(cfg, ds, run).step_loss;
  run_final_stage(cfg, ds, run);
  const Model model = load_stage_model(cfg, run, kStageFinal);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  const auto test = score_clips(model, ds, "test", static_cast<int>(cfg.get_int("score.stride")), seed);
  const auto train = score_clips(model, ds, "train", static_cast<int>(cfg.get_int("train.stride")), seed);
  fs::create_directories(root / "scores");
  r.test_csv = root / "scores" / "scores_test.csv";
  r.train_csv = root / "scores" / "scores_train.csv";
  write_clip_scores(r.test_csv, test);
  write_clip_scores(r.train_csv, train);
  const auto ev = evaluate(cfg, ds, read_clip_scores(r.test_csv), read_clip_scores(r.train_csv));
  emit_report(ev, root / "report");
  r.summary = ev.summary;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::map<std::uint64_t, PipelineRun> g_runs;

const PipelineRun& seed_run(std::uint64_t seed) {
  auto it = g_runs.find(seed);
  if (it == g_runs.end()) {
    it = g_runs.emplace(seed, run_pipeline(acceptance_config(seed), g_work / ("seed" + std::to_string(seed)))).first;
  }
  return it->second;
}

Verdict criterion_end_to_end() {
  Verdict v;
  int held = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto& r = seed_run(seed);
    const auto& c = r.summary["components"];
    auto get = [&](const char* comp, const char* subset) { return c[comp][subset].get<double>(); };
    const double overall = r.summary["auc_overall"].get<double>();
    const double mo_m = get("s_mo", "motion"), app_m = get("s_app", "motion"), mm_m = get("s_mm", "motion");
    const double mo_s = get("s_mo", "scene"), app_s = get("s_app", "scene"), mm_s = get("s_mm", "scene");
    const bool auc_ok = overall >= 0.85;
    const bool motion_ok = mo_m > app_m && mo_m > mm_m;
    const bool scene_ok = mm_s > mo_s && mm_s > app_s;
    const bool ok = auc_ok && motion_ok && scene_ok;
    held += ok;
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "seed %llu %s: combined %.3f%s | motion subset mo %.3f app %.3f mm %.3f%s | scene subset mo %.3f "
                  "app %.3f mm %.3f%s | %.0fs",
                  static_cast<unsigned long long>(seed), ok ? "holds" : "fails", overall, auc_ok ? "" : " (<0.85)",
                  mo_m, app_m, mm_m, motion_ok ? "" : " (S_mo not highest)", mo_s, app_s, mm_s,
                  scene_ok ? "" : " (S_mm not highest)", r.seconds);
    v.note(buf);
  }
  v.require(held >= 4, "criteria held for " + std::to_string(held) + " of 5 seeds, need 4");
  return v;
}

// ----------------------------------------------------------- determinism ---

Verdict criterion_determinism() {
  Verdict v;
  const auto& a = seed_run(1);
  const auto b = run_pipeline(acceptance_config(1), g_work / "seed1_repeat");
  v.require(a.dataset_hash == b.dataset_hash, "dataset hashes differ");
  auto same_curve = [&](const std::vector<double>& x, const std::vector<double>& y, const char* what) {
    bool ok = x.size() == y.size();
    for (std::size_t i = 0; ok && i < x.size(); ++i) ok = std::abs(x[i] - y[i]) <= 1e-6;
    v.require(ok, std::string(what) + " loss curves differ");
  };
  same_curve(a.flow_loss, b.flow_loss, "flow");
  same_curve(a.joint_loss, b.joint_loss, "joint");
  v.require(read_file(a.test_csv) == read_file(b.test_csv), "test score CSVs differ");
  v.require(read_file(a.train_csv) == read_file(b.train_csv), "train score CSVs differ");
  v.note("seed 1 twice: " + std::to_string(a.joint_loss.size()) + " joint steps, dataset " + a.dataset_hash.substr(0, 12));
  return v;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (!a.empty() && std::all_of(a.begin(), a.end(), ::isdigit)) {
      only.insert(std::stoi(a));
    } else {
      std::fprintf(stderr, "usage: acceptance [N ...] [--work DIR]\n");
      return 2;
    }
  }
  log::set_level(log::Level::kWarning);
  fs::create_directories(g_work);

  const std::vector<Criterion> all = {
      {1, "flow invertibility and log-determinant", criterion_flow},
      {2, "gradient suite", criterion_gradients},
      {3, "closed-form examples", criterion_examples},
      {4, "mask algebra", criterion_masks},
      {5, "memory algebra", criterion_memory},
      {6, "AUC oracle", criterion_auc},
      {7, "synthetic end-to-end", criterion_end_to_end},
      {8, "determinism", criterion_determinism},
  };
  int failed = 0;
  nlohmann::json report = nlohmann::json::array();
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& n : v.notes) std::printf("    %s\n", n.c_str());
    for (const auto& f : v.failures) std::printf("    failure: %s\n", f.c_str());
    std::printf("criterion %d %s: %s (%.1fs)\n", c.id, c.name, v.passed() ? "PASS" : "FAIL", secs);
    std::fflush(stdout);
    failed += !v.passed();
    report.push_back({{"criterion", c.id}, {"name", c.name}, {"passed", v.passed()}, {"seconds", secs},
                      {"notes", v.notes}, {"failures", v.failures}});
  }
  std::ofstream(g_work / "acceptance.json") << report.dump(2) << "\n";
  std::printf("acceptance: %d failed\n", failed);
  return failed == 0 ? 0 : 1;
}
