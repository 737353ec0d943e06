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

#include "core/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "core/flow.hpp"
#include "core/losses.hpp"
#include "core/memory.hpp"
#include "core/rng.hpp"
#include "core/scoring.hpp"
#include "core/tokenizer.hpp"

namespace guidex {

namespace {

struct Suite {
  nlohmann::json checks = nlohmann::json::array();
  int passed = 0, failed = 0;

  void run(const std::string& name, const std::function<std::string()>& body) {
    std::string detail;
    bool ok = false;
    try {
      detail = body();
      ok = detail.empty();
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    (ok ? passed : failed)++;
    checks.push_back({{"name", name}, {"passed", ok}, {"detail", ok ? "ok" : detail}});
  }
};

std::string fail_if(bool bad, const std::string& what) { return bad ? what : std::string(); }

double pair_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!l[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j]) continue;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      pairs += 1.0;
    }
  }
  return num / pairs;
}

}  // namespace

nlohmann::json run_selftest(std::uint64_t seed) {
  Suite suite;

  suite.run("flow.round_trip", [&] {
    nn::ParamRegistry reg;
    Rng rng(derive_seed(seed, "selftest.flow"));
    FlowConfig fc;
    fc.steps = 4;
    fc.hidden = 8;
    PoseFlow flow(reg, "flow", fc, rng);
    for (const auto& p : reg.all()) {
      ag::Var v = p.var;
      for (double& x : v.mutable_value()) x += 0.2 * rng.normal();
    }
    double worst = 0.0;
    for (int n = 0; n < 20; ++n) {
      std::vector<double> x(static_cast<std::size_t>(fc.frames * fc.joints * fc.channels));
      for (double& v : x) v = rng.uniform();
      const auto z = flow.forward(ag::Var::constant({fc.frames * fc.joints, fc.channels}, x)).latent.value();
      const auto back = flow.inverse(z);
      for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
    }
    return fail_if(!(worst < 1e-4), "max round-trip error " + std::to_string(worst));
  });

  suite.run("auc.pair_counting", [&] {
    Rng rng(derive_seed(seed, "selftest.auc"));
    for (int n = 0; n < 200; ++n) {
      const int len = rng.uniform_int(2, 40);
      std::vector<double> s(static_cast<std::size_t>(len));
      std::vector<int> l(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i) {
        s[i] = std::round(rng.uniform() * 8.0) / 8.0;  // coarse values force ties
        l[i] = rng.bernoulli(0.4);
      }
      l[0] = 1;
      l[1] = 0;
      if (std::abs(auc(s, l) - pair_auc(s, l)) > 1e-9) return std::string("rank and pair AUC disagree");
    }
    return std::string();
  });

  suite.run("mask.partition", [&] {
    const GridShape g{4, 8, 8};
    for (int n = 0; n < 200; ++n) {
      Rng rng(derive_seed(seed, "selftest.mask", static_cast<std::uint64_t>(n)));
      const MaskPair m = sample_block_mask(g, 0.5, rng);
      std::vector<int> seen(static_cast<std::size_t>(g.tokens()), 0);
      for (int i : m.mask) seen[i]++;
      for (int i : m.complement) seen[i]++;
      if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) return std::string("not a partition");
      for (int i : m.mask) {
        if (!m.spatial[static_cast<std::size_t>(i % g.spatial())]) return std::string("mask varies over time");
      }
    }
    return std::string();
  });

  suite.run("memory.address_rows", [&] {
    Rng rng(derive_seed(seed, "selftest.memory"));
    std::vector<double> q(5 * 6), m(4 * 6);
    for (double& v : q) v = rng.normal();
    for (double& v : m) v = rng.normal();
    const auto w = address(ag::Var::constant({5, 6}, q), ag::Var::constant({4, 6}, m)).value();
    std::vector<double> q5 = q;
    for (double& v : q5) v *= 5.0;
    const auto w5 = address(ag::Var::constant({5, 6}, q5), ag::Var::constant({4, 6}, m)).value();
    for (int r = 0; r < 5; ++r) {
      double s = 0.0;
      for (int c = 0; c < 4; ++c) s += w[r * 4 + c];
      if (std::abs(s - 1.0) > 1e-6) return std::string("row does not sum to 1");
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (std::abs(w[i] - w5[i]) > 1e-6) return std::string("addressing changes under query scaling");
    }
    return std::string();
  });

  suite.run("memory.softmax_cosine", [&] {
    const auto w = address(ag::Var::constant({1, 2}, {1, 0}), ag::Var::constant({2, 2}, {1, 0, 0, 1})).value();
    const double e = std::exp(1.0);
    return fail_if(std::abs(w[0] - e / (e + 1)) > 1e-12 || std::abs(w[1] - 1 / (e + 1)) > 1e-12, "expected e/(e+1)");
  });

  suite.run("memory.update_unit_norm", [&] {
    nn::ParamRegistry reg;
    MatchingMemory mr(reg, "memory.matching", 5, 6, 3, derive_seed(seed, "selftest.matching"));
    Rng rng(derive_seed(seed, "selftest.matching.q"));
    std::vector<std::vector<double>> qs(12, std::vector<double>(9));
    for (auto& q : qs) {
      for (double& v : q) v = rng.uniform();
    }
    mr.begin_final_round();
    mr.update(qs);
    mr.end_final_round();
    const auto& v = mr.bank().slots().value();
    for (int i = 0; i < 5; ++i) {
      double n = 0.0;
      for (int j = 0; j < 9; ++j) n += v[i * 9 + j] * v[i * 9 + j];
      if (std::abs(std::sqrt(n) - 1.0) > 1e-9) return std::string("slot norm drifted");
    }
    return std::string();
  });

  suite.run("scores.examples", [&] {
    const std::vector<double> a{1, 0}, b{0, 1}, na{-1, 0};
    bool bad = std::abs(score_motion(a, b) - std::sqrt(2.0)) > 1e-9 || score_motion(a, a) != 0.0;
    bad = bad || std::abs(score_appearance(a, a, a, 2)) > 1e-9;
    bad = bad || std::abs(score_appearance(a, b, b, 2) - 1.0) > 1e-9;
    bad = bad || std::abs(score_appearance(a, a, na, 2) - 1.0) > 1e-9;
    bad = bad || std::abs(score_scene(a, b) - std::sqrt(2.0)) > 1e-9;
    const std::vector<double> raw{1, 3};
    const auto mm = min_max(raw);
    bad = bad || mm[0] != 0.0 || mm[1] != 1.0;
    return fail_if(bad, "score example mismatch");
  });

  suite.run("scores.frame_assignment", [&] {
    const std::vector<PlacedScore> one{{0, 0, 0.7}};
    const auto f = frame_scores(one, 12, 8);
    const std::vector<PlacedScore> two{{0, 0, 0.2}, {1, 0, 0.9}};
    const auto g = frame_scores(two, 12, 8);
    bool bad = std::any_of(f.begin(), f.end(), [](double v) { return v != 0.7; });
    bad = bad || std::any_of(g.begin(), g.end(), [](double v) { return v != 0.9; });
    return fail_if(bad, "centre assignment or max-over-persons mismatch");
  });

  suite.run("losses.weighted_total", [&] {
    LossParts p;
    p.motion = ag::Var::constant({1}, {1.0});
    p.appearance = ag::Var::constant({1}, {2.0});
    p.sep_behavior = ag::Var::constant({1}, {1.0});
    p.sep_scene = ag::Var::constant({1}, {1.0});
    p.sep_matching = ag::Var::constant({1}, {1.0});
    LossWeights w;
    w.alpha = 0.5;
    w.beta = 0.1;
    return fail_if(std::abs(total_loss(p, w).item() - 2.3) > 1e-9, "expected 2.3");
  });

  return {{"passed", suite.passed}, {"failed", suite.failed}, {"checks", suite.checks}};
}

}  // namespace guidex
