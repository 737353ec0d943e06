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

// Spatio-temporal normalizing flow over skeleton sequences.
//
// Each step is ActNorm -> channel reversal -> affine coupling. The coupling
// keeps the even channels, and predicts a log-scale and shift for the odd
// ones with a two-layer conditioner; each layer mixes joints with the
// normalized skeleton adjacency and then applies a kernel-3 temporal
// convolution. Log-scales are 2*tanh(raw), so they stay in [-2, 2].
// The conditioner's last layer starts at zero, which makes a fresh flow the
// identity when the step count is even.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/autograd.hpp"
#include "core/nn.hpp"

namespace guidex {

struct FlowConfig {
  int steps = 8;
  int hidden = 16;
  int frames = 8;
  int joints = 8;
  int channels = 2;
  std::vector<std::pair<int, int>> edges;  // empty -> chain graph
};

// Symmetric normalized adjacency with self loops, D^-1/2 (A + I) D^-1/2.
std::vector<double> normalized_adjacency(int vertices, const std::vector<std::pair<int, int>>& edges);

class PoseFlow {
 public:
  PoseFlow() = default;
  PoseFlow(nn::ParamRegistry& reg, const std::string& prefix, const FlowConfig& cfg, Rng& rng);

  struct Output {
    ag::Var latent;  // [T, V*C]
    ag::Var logdet;  // scalar
  };

  // x is [T*V, C] with rows ordered (frame, joint). Throws NumericalError
  // naming the step if an intermediate value is non-finite.
  Output forward(const ag::Var& x) const;
  // Exact inverse of forward, evaluated without gradient tracking.
  std::vector<double> inverse(std::span<const double> latent) const;
  // log N(latent; 0, I) + logdet.
  ag::Var log_prob(const ag::Var& x) const;

  // Sets every ActNorm so that its input has zero mean and unit variance
  // per channel over `batch`, propagating through the steps in order.
  void init_actnorm(const std::vector<std::vector<double>>& batch);

  std::vector<ag::Var> parameters() const;
  const FlowConfig& config() const { return cfg_; }
  int latent_dim() const { return cfg_.joints * cfg_.channels; }

 private:
  struct Layer {
    nn::Linear temporal;  // [out, 3*in] over (t-1, t, t+1)
  };
  struct Step {
    ag::Var an_bias;       // [C]
    ag::Var an_logscale;   // [C]
    Layer layer1, layer2;  // layer2 emits [log-scale | shift]
  };

  std::pair<ag::Var, ag::Var> conditioner(const Step& s, const ag::Var& kept) const;
  ag::Var actnorm(const Step& s, const ag::Var& x, ag::Var* logdet) const;
  ag::Var conv_layer(const Layer& l, const ag::Var& x) const;

  FlowConfig cfg_;
  std::vector<double> adj_;
  std::vector<int> even_, odd_, reversal_;
  std::vector<Step> steps_;
};

}  // namespace guidex
