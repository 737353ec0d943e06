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

#include "core/losses.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/log.hpp"
#include "core/memory.hpp"

namespace guidex {

namespace {

void require_same_shape(const ag::Var& a, const ag::Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(what) + ": shape " + ag::shape_str(a.shape()) + " vs " + ag::shape_str(b.shape()));
  }
}

void require_finite(const ag::Var& v, const char* what) {
  if (!std::isfinite(v.item())) throw NumericalError(std::string("non-finite loss component: ") + what);
}

bool has_zero_row(const ag::Var& a) {
  const int m = a.dim(0), n = a.dim(1);
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += a.at(static_cast<std::size_t>(i) * n + j) * a.at(static_cast<std::size_t>(i) * n + j);
    if (s < 1e-24) return true;
  }
  return false;
}

}  // namespace

ag::Var loss_motion(const ag::Var& f_sk, const ag::Var& f_rgb) {
  require_same_shape(f_sk, f_rgb, "motion loss");
  return ag::sum(ag::square(ag::sub(f_rgb, f_sk)));
}

ag::Var loss_appearance(const ag::Var& f_m, const ag::Var& f_u) {
  require_same_shape(f_m, f_u, "appearance loss");
  if (has_zero_row(f_m) || has_zero_row(f_u)) log::warn("appearance loss: zero vector, term set to 1");
  const ag::Var cos = ag::dot_rows(ag::normalize_rows(f_m), ag::normalize_rows(f_u));
  return ag::add_scalar(ag::scale(ag::mean(cos), -1.0), 1.0);
}

ag::Var total_loss(const LossParts& p, const LossWeights& w) {
  require_finite(p.motion, "motion");
  require_finite(p.appearance, "appearance");
  require_finite(p.sep_behavior, "behavior separateness");
  require_finite(p.sep_scene, "scene separateness");
  require_finite(p.sep_matching, "matching separateness");
  const ag::Var sep = ag::add(ag::add(p.sep_behavior, p.sep_scene), p.sep_matching);
  return ag::add(ag::add(p.motion, ag::scale(p.appearance, w.alpha)), ag::scale(sep, w.beta));
}

LossParts clip_losses(const Model& model, const ClipInput& in, std::span<const int> masked, const LossWeights& w) {
  const ForwardOutputs o = model.forward(in);
  LossParts p;
  p.motion = loss_motion(o.f_sk, o.f_rgb);
  p.appearance = loss_appearance(model.masked_latent(in, masked), o.f_u);
  p.sep_behavior = separateness_loss(o.e_b, model.behavior_memory.slots(), w.epsilon);
  p.sep_scene = separateness_loss(o.e_s, model.scene_memory.slots(), w.epsilon);
  // The matching bank is written only by its final-round update.
  p.sep_matching = separateness_loss(o.w_r, ag::detach(model.matching_memory.bank().slots()), w.epsilon);
  p.total = total_loss(p, w);
  return p;
}

}  // namespace guidex
