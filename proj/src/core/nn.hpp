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

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core/autograd.hpp"
#include "core/rng.hpp"

namespace guidex::nn {

using ag::Var;

struct NamedParam {
  std::string name;
  Var var;
};

// Ordered parameter registry. Names are unique dotted paths.
class ParamRegistry {
 public:
  Var add(std::string name, ag::Shape shape, std::vector<double> init);
  Var zeros(std::string name, ag::Shape shape);
  Var ones(std::string name, ag::Shape shape);
  Var uniform(std::string name, ag::Shape shape, double bound, Rng& rng);
  Var normal(std::string name, ag::Shape shape, double stddev, Rng& rng);

  const std::vector<NamedParam>& all() const { return params_; }
  std::vector<Var> with_prefix(std::string_view prefix) const;
  const Var* find(std::string_view name) const;
  std::size_t count() const;

  void zero_grad();

 private:
  std::vector<NamedParam> params_;
};

struct Linear {
  Var weight;  // [out, in]
  Var bias;    // [out]

  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int in, int out, Rng& rng, bool zero_init = false);
  Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }
  int in_features() const { return weight.dim(1); }
  int out_features() const { return weight.dim(0); }
};

struct LayerNorm {
  Var gain;
  Var bias;

  LayerNorm() = default;
  LayerNorm(ParamRegistry& reg, const std::string& name, int dim);
  Var operator()(const Var& x) const { return ag::layernorm_rows(x, gain, bias); }
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var> params, AdamOptions opts = {});

  void step(double lr);
  // Scales all gradients so their joint L2 norm is at most max_norm.
  double clip_grad_norm(double max_norm);
  void zero_grad();

  long steps() const { return t_; }
  const std::vector<Var>& params() const { return params_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  std::vector<Var> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions opts_;
  long t_ = 0;
};

// Cosine decay from base_lr to 0 over total_steps.
double cosine_lr(double base_lr, long step, long total_steps);

}  // namespace guidex::nn
