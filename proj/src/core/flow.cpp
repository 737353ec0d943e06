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

#include "core/flow.hpp"

#include <cmath>
#include <numbers>

#include "core/errors.hpp"

namespace guidex {

namespace {

void check_finite(const ag::Var& v, int step, const char* what) {
  for (double x : v.value()) {
    if (!std::isfinite(x)) {
      throw NumericalError("flow step " + std::to_string(step) + ": non-finite " + what);
    }
  }
}

}  // namespace

std::vector<double> normalized_adjacency(int vertices, const std::vector<std::pair<int, int>>& edges) {
  const int v = vertices;
  std::vector<double> a(static_cast<std::size_t>(v) * v, 0.0);
  for (int i = 0; i < v; ++i) a[i * v + i] = 1.0;
  if (edges.empty()) {
    for (int i = 0; i + 1 < v; ++i) a[i * v + i + 1] = a[(i + 1) * v + i] = 1.0;
  }
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= v || j >= v) throw ValidationError("skeleton edge out of range");
    a[i * v + j] = a[j * v + i] = 1.0;
  }
  std::vector<double> deg(v, 0.0);
  for (int i = 0; i < v; ++i)
    for (int j = 0; j < v; ++j) deg[i] += a[i * v + j];
  for (int i = 0; i < v; ++i)
    for (int j = 0; j < v; ++j) a[i * v + j] /= std::sqrt(deg[i] * deg[j]);
  return a;
}

PoseFlow::PoseFlow(nn::ParamRegistry& reg, const std::string& prefix, const FlowConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.channels < 2) throw ValidationError("flow needs at least 2 channels");
  if (cfg.steps < 0 || cfg.hidden < 1 || cfg.frames < 1 || cfg.joints < 1) throw ValidationError("bad flow shape");
  adj_ = normalized_adjacency(cfg.joints, cfg.edges);
  for (int c = 0; c < cfg.channels; ++c) (c % 2 == 0 ? even_ : odd_).push_back(c);
  for (int c = cfg.channels - 1; c >= 0; --c) reversal_.push_back(c);
  const int ca = static_cast<int>(even_.size()), cb = static_cast<int>(odd_.size());
  for (int k = 0; k < cfg.steps; ++k) {
    const std::string p = prefix + ".step" + std::to_string(k);
    Step s;
    s.an_bias = reg.zeros(p + ".actnorm.bias", {cfg.channels});
    s.an_logscale = reg.zeros(p + ".actnorm.logscale", {cfg.channels});
    s.layer1.temporal = nn::Linear(reg, p + ".cond.layer1", 3 * ca, cfg.hidden, rng);
    s.layer2.temporal = nn::Linear(reg, p + ".cond.layer2", 3 * cfg.hidden, 2 * cb, rng, /*zero_init=*/true);
    steps_.push_back(std::move(s));
  }
}

ag::Var PoseFlow::conv_layer(const Layer& l, const ag::Var& x) const {
  const ag::Var mixed = ag::graph_mix(x, adj_, cfg_.joints);
  const ag::Var taps[3] = {ag::shift_rows(mixed, 1, cfg_.joints), mixed, ag::shift_rows(mixed, -1, cfg_.joints)};
  return l.temporal(ag::concat_cols(taps));
}

std::pair<ag::Var, ag::Var> PoseFlow::conditioner(const Step& s, const ag::Var& kept) const {
  const int cb = static_cast<int>(odd_.size());
  const ag::Var h = ag::gelu(conv_layer(s.layer1, kept));
  const ag::Var raw = conv_layer(s.layer2, h);
  return {ag::scale(ag::tanh(ag::slice_cols(raw, 0, cb)), 2.0), ag::slice_cols(raw, cb, cb)};
}

ag::Var PoseFlow::actnorm(const Step& s, const ag::Var& x, ag::Var* logdet) const {
  if (logdet) {
    const double rows = static_cast<double>(x.dim(0));
    *logdet = logdet->defined() ? ag::add(*logdet, ag::scale(ag::sum(s.an_logscale), rows))
                                : ag::scale(ag::sum(s.an_logscale), rows);
  }
  return ag::mul_row(ag::add_row(x, s.an_bias), ag::exp(s.an_logscale));
}

PoseFlow::Output PoseFlow::forward(const ag::Var& x) const {
  const int rows = cfg_.frames * cfg_.joints, C = cfg_.channels;
  if (x.rank() != 2 || x.dim(0) != rows || x.dim(1) != C) {
    throw ValidationError("flow input must be [" + std::to_string(rows) + ", " + std::to_string(C) + "], got " +
                          ag::shape_str(x.shape()));
  }
  check_finite(x, 0, "input");
  ag::Var h = x;
  ag::Var logdet;
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    const Step& s = steps_[k];
    h = actnorm(s, h, &logdet);
    h = ag::gather_cols(h, reversal_);
    const ag::Var kept = ag::gather_cols(h, even_);
    const ag::Var moved = ag::gather_cols(h, odd_);
    auto [logscale, shift] = conditioner(s, kept);
    const ag::Var y = ag::add(ag::mul(moved, ag::exp(logscale)), shift);
    h = ag::add(ag::scatter_cols(kept, even_, C), ag::scatter_cols(y, odd_, C));
    logdet = ag::add(logdet, ag::sum(logscale));
    check_finite(h, static_cast<int>(k), "activation");
  }
  if (!logdet.defined()) logdet = ag::Var::zeros({1});
  check_finite(logdet, static_cast<int>(steps_.size()), "log-determinant");
  return {ag::reshape(h, {cfg_.frames, cfg_.joints * C}), logdet};
}

std::vector<double> PoseFlow::inverse(std::span<const double> latent) const {
  const int rows = cfg_.frames * cfg_.joints, C = cfg_.channels;
  if (latent.size() != static_cast<std::size_t>(rows) * C) throw ValidationError("flow latent size mismatch");
  ag::NoGradGuard guard;
  ag::Var h = ag::Var::constant({rows, C}, {latent.begin(), latent.end()});
  for (std::size_t k = steps_.size(); k-- > 0;) {
    const Step& s = steps_[k];
    const ag::Var kept = ag::gather_cols(h, even_);
    const ag::Var moved = ag::gather_cols(h, odd_);
    auto [logscale, shift] = conditioner(s, kept);
    const ag::Var x = ag::mul(ag::sub(moved, shift), ag::exp(ag::scale(logscale, -1.0)));
    h = ag::add(ag::scatter_cols(kept, even_, C), ag::scatter_cols(x, odd_, C));
    h = ag::gather_cols(h, reversal_);
    h = ag::sub(ag::mul_row(h, ag::exp(ag::scale(s.an_logscale, -1.0))),
                ag::matmul(ag::Var::full({rows, 1}, 1.0), ag::reshape(s.an_bias, {1, C})));
    check_finite(h, static_cast<int>(k), "inverse activation");
  }
  return h.value();
}

ag::Var PoseFlow::log_prob(const ag::Var& x) const {
  const Output out = forward(x);
  const double n = static_cast<double>(out.latent.size());
  const ag::Var quad = ag::scale(ag::sum(ag::square(out.latent)), -0.5);
  return ag::add(ag::add_scalar(quad, -0.5 * n * std::log(2.0 * std::numbers::pi)), out.logdet);
}

void PoseFlow::init_actnorm(const std::vector<std::vector<double>>& batch) {
  if (batch.empty()) return;
  ag::NoGradGuard guard;
  const int rows = cfg_.frames * cfg_.joints, C = cfg_.channels;
  std::vector<ag::Var> hs;
  for (const auto& b : batch) hs.push_back(ag::Var::constant({rows, C}, b));
  for (Step& s : steps_) {
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    double n = 0.0;
    for (const auto& h : hs) {
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < C; ++c) mean[c] += h.at(static_cast<std::size_t>(r) * C + c);
      n += rows;
    }
    for (double& m : mean) m /= n;
    for (const auto& h : hs) {
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < C; ++c) {
          const double d = h.at(static_cast<std::size_t>(r) * C + c) - mean[c];
          var[c] += d * d;
        }
    }
    for (int c = 0; c < C; ++c) {
      const double sd = std::sqrt(var[c] / n) + 1e-6;
      s.an_bias.mutable_value()[c] = -mean[c];
      s.an_logscale.mutable_value()[c] = -std::log(sd);
    }
    for (auto& h : hs) {
      ag::Var y = actnorm(s, h, nullptr);
      y = ag::gather_cols(y, reversal_);
      const ag::Var kept = ag::gather_cols(y, even_);
      auto [logscale, shift] = conditioner(s, kept);
      const ag::Var moved = ag::add(ag::mul(ag::gather_cols(y, odd_), ag::exp(logscale)), shift);
      h = ag::add(ag::scatter_cols(kept, even_, C), ag::scatter_cols(moved, odd_, C));
    }
  }
}

std::vector<ag::Var> PoseFlow::parameters() const {
  std::vector<ag::Var> out;
  for (const Step& s : steps_) {
    out.insert(out.end(), {s.an_bias, s.an_logscale, s.layer1.temporal.weight, s.layer1.temporal.bias,
                           s.layer2.temporal.weight, s.layer2.temporal.bias});
  }
  return out;
}

}  // namespace guidex
