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

#include <algorithm>
#include <cmath>
#include <functional>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "core/trainer.hpp"

namespace guidex {

namespace {

constexpr double kStep = 1e-5;
// Central differences of an O(10) objective at this step carry roundoff near
// 1e-9, so gradients below the floor are compared on an absolute scale.
constexpr double kFloor = 1e-5;
constexpr std::size_t kMaxPerTensor = 24;

ModelShape tiny_shape() {
  ModelShape s;
  s.T = 4;
  s.H = 32;  // 4x4 spatial grid, big enough for a 50% block mask
  s.W = 32;
  s.dim = 8;
  s.depth = 1;
  s.heads = 2;
  s.mlp_ratio = 2;
  s.c_b = 6;
  s.c_app = 4;
  s.c_s = 5;
  s.head_hidden = 6;
  s.l_lsta = 1;
  s.lka_kernel = 6;
  s.lka_dilation = 2;
  s.n_b = 3;
  s.n_s = 3;
  s.n_r = 3;
  s.flow_steps = 2;
  s.flow_hidden = 4;
  return s;
}

synth::ClipSample random_clip(const ModelShape& s, Rng& rng) {
  synth::ClipSample c;
  c.T = s.T;
  c.H = s.H;
  c.W = s.W;
  c.V = s.V;
  c.rgb.resize(static_cast<std::size_t>(s.T) * s.H * s.W * 3);
  for (double& v : c.rgb) v = rng.uniform();
  c.pose.resize(static_cast<std::size_t>(s.T) * s.V * 2);
  for (double& v : c.pose) v = rng.uniform(0.2, 0.8);
  c.scene_image.resize(static_cast<std::size_t>(s.H) * s.W * 3);
  for (double& v : c.scene_image) v = rng.uniform();
  return c;
}

bool selected(const std::string& selector, const std::string& name) {
  auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
  if (selector == "all") return true;
  if (selector == "flow") return starts("flow.");
  if (selector == "encoder") return starts("rgb_encoder.") || starts("mask_encoder.");
  if (selector == "head") return starts("motion_head.");
  if (selector == "projection") return starts("behavior_projection.") || starts("mask_projection.");
  if (selector == "memory") return starts("memory.behavior") || starts("memory.scene");
  if (selector == "scene") return starts("scene_extractor.");
  throw ValidationError("unknown grad-check selector: " + selector);
}

GradCheckEntry check_tensor(const std::string& name, const std::string& objective, ag::Var param,
                            const std::function<double()>& f, Rng& rng) {
  GradCheckEntry e;
  e.tensor = name;
  e.objective = objective;
  const std::vector<double> analytic = param.grad().empty() ? std::vector<double>(param.size(), 0.0) : param.grad();
  std::vector<std::size_t> idx(param.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (idx.size() > kMaxPerTensor) {
    for (std::size_t i = 0; i < kMaxPerTensor; ++i) std::swap(idx[i], idx[i + rng.uniform_int(0, static_cast<int>(idx.size() - i - 1))]);
    idx.resize(kMaxPerTensor);
  }
  auto& v = param.mutable_value();
  for (std::size_t i : idx) {
    const double orig = v[i];
    v[i] = orig + kStep;
    const double up = f();
    v[i] = orig - kStep;
    const double down = f();
    v[i] = orig;
    const double numeric = (up - down) / (2.0 * kStep);
    const double rel = std::abs(numeric - analytic[i]) / std::max({std::abs(numeric), std::abs(analytic[i]), kFloor});
    e.max_rel_error = std::max(e.max_rel_error, rel);
    ++e.checked;
  }
  return e;
}

}  // namespace

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [&](const GradCheckEntry& e) { return e.max_rel_error < tolerance; });
}

GradCheckReport grad_check(const std::string& selector, double tolerance, std::uint64_t seed) {
  const ModelShape shape = tiny_shape();
  Model model(shape, seed);
  Rng rng(derive_seed(seed, "gradcheck"));
  // Move away from the zero/identity initialisation so every path carries
  // signal.
  for (const auto& p : model.params().all()) {
    ag::Var v = p.var;
    for (double& x : v.mutable_value()) x += 0.3 * rng.normal();
  }
  const ClipInput in = prepare_clip(random_clip(shape, rng));
  Rng mrng(derive_seed(seed, "gradcheck.mask"));
  const MaskPair mask = sample_block_mask(shape.grid(), 0.5, mrng);
  const LossWeights w;

  GradCheckReport rep;
  rep.tolerance = tolerance;

  // Flow parameters against the likelihood objective.
  if (selector == "flow" || selector == "all") {
    auto nll = [&] { return -model.flow.log_prob(in.pose).item(); };
    model.params().zero_grad();
    ag::scale(model.flow.log_prob(in.pose), -1.0).backward();
    for (const auto& p : model.params().all()) {
      if (p.name.rfind("flow.", 0) == 0) rep.entries.push_back(check_tensor(p.name, "nll", p.var, nll, rng));
    }
  }
  if (selector == "flow") return rep;

  // Everything else against the joint objective.
  auto total = [&] { return clip_losses(model, in, mask.mask, w).total.item(); };
  // The appearance branch reads memory with a detached e_b, so the appearance
  // loss has no gradient path into the RGB encoder even though its value
  // depends on it. Finite differences there use the objective without it.
  auto without_appearance = [&] {
    const LossParts p = clip_losses(model, in, mask.mask, w);
    return p.total.item() - w.alpha * p.appearance.item();
  };
  model.params().zero_grad();
  clip_losses(model, in, mask.mask, w).total.backward();
  for (const auto& p : model.params().all()) {
    if (p.name.rfind("flow.", 0) == 0 || p.name == kMatchingName) continue;
    if (!selected(selector, p.name)) continue;
    if (p.name.rfind(std::string(kRgbPrefix) + ".", 0) == 0) {
      rep.entries.push_back(check_tensor(p.name, "total-appearance", p.var, without_appearance, rng));
    } else {
      rep.entries.push_back(check_tensor(p.name, "total", p.var, total, rng));
    }
  }
  return rep;
}

}  // namespace guidex
