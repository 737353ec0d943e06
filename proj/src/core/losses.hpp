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

#pragma once

// Training objectives. Per-clip values; callers average over the batch.

#include "core/autograd.hpp"
#include "core/model.hpp"

namespace guidex {

// Squared L2 distance summed over all entries.
ag::Var loss_motion(const ag::Var& f_sk, const ag::Var& f_rgb);
// Mean over rows of 1 - cos(f_m[t], f_u[t]); a zero row contributes 1.
ag::Var loss_appearance(const ag::Var& f_m, const ag::Var& f_u);

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.1;
  double epsilon = 1.0;
};

struct LossParts {
  ag::Var motion, appearance, sep_behavior, sep_scene, sep_matching, total;
};

// total = motion + alpha * appearance + beta * (sep_b + sep_s + sep_r).
// Throws NumericalError if any part is non-finite.
ag::Var total_loss(const LossParts& parts, const LossWeights& w);

// Builds every part for one clip and mask.
LossParts clip_losses(const Model& model, const ClipInput& in, std::span<const int> masked, const LossWeights& w);

}  // namespace guidex
