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

#include "core/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace guidex::nn {

Var ParamRegistry::add(std::string name, ag::Shape shape, std::vector<double> init) {
  if (find(name)) throw std::logic_error("duplicate parameter name: " + name);
  Var v = Var::parameter(std::move(shape), std::move(init));
  params_.push_back({std::move(name), v});
  return v;
}

Var ParamRegistry::zeros(std::string name, ag::Shape shape) {
  const std::size_t n = ag::numel(shape);
  return add(std::move(name), std::move(shape), std::vector<double>(n, 0.0));
}

Var ParamRegistry::ones(std::string name, ag::Shape shape) {
  const std::size_t n = ag::numel(shape);
  return add(std::move(name), std::move(shape), std::vector<double>(n, 1.0));
}

Var ParamRegistry::uniform(std::string name, ag::Shape shape, double bound, Rng& rng) {
  std::vector<double> v(ag::numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(shape), std::move(v));
}

Var ParamRegistry::normal(std::string name, ag::Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(ag::numel(shape));
  for (double& x : v) x = stddev * rng.normal();
  return add(std::move(name), std::move(shape), std::move(v));
}

std::vector<Var> ParamRegistry::with_prefix(std::string_view prefix) const {
  std::vector<Var> out;
  for (const auto& p : params_) {
    if (std::string_view(p.name).substr(0, prefix.size()) == prefix) out.push_back(p.var);
  }
  return out;
}

const Var* ParamRegistry::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p.var;
  }
  return nullptr;
}

std::size_t ParamRegistry::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

void ParamRegistry::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

Linear::Linear(ParamRegistry& reg, const std::string& name, int in, int out, Rng& rng, bool zero_init) {
  if (zero_init) {
    weight = reg.zeros(name + ".weight", {out, in});
  } else {
    weight = reg.uniform(name + ".weight", {out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  }
  bias = reg.zeros(name + ".bias", {out});
}

LayerNorm::LayerNorm(ParamRegistry& reg, const std::string& name, int dim) {
  gain = reg.ones(name + ".gain", {dim});
  bias = reg.zeros(name + ".bias", {dim});
}

Adam::Adam(std::vector<Var> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  for (const Var& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var& p = params_[k];
    const auto& g = p.grad();
    if (g.empty()) continue;
    auto& val = p.mutable_value();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

double Adam::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const Var& p : params_) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (Var& p : params_) {
      if (p.grad().empty()) continue;
      for (double& g : p.mutable_grad()) g *= f;
    }
  }
  return norm;
}

void Adam::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

double cosine_lr(double base_lr, long step, long total_steps) {
  if (total_steps <= 0) return base_lr;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace guidex::nn
