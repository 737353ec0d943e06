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

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "core/errors.hpp"
#include "core/flow.hpp"
#include "test_util.hpp"

namespace guidex {
namespace {

// Flow with every parameter moved off its identity initialisation.
struct PerturbedFlow {
  nn::ParamRegistry reg;
  PoseFlow flow;

  PerturbedFlow(const FlowConfig& fc, std::uint64_t seed, double spread = 0.3) {
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

ag::Var as_input(const FlowConfig& fc, const std::vector<double>& x) {
  return ag::Var::constant({fc.frames * fc.joints, fc.channels}, x);
}

TEST(Flow, InverseRoundTrip) {
  FlowConfig fc;  // T=8, V=8, C=2
  fc.edges = {{0, 1}, {1, 2}, {1, 3}, {1, 4}, {4, 5}, {5, 6}, {5, 7}};
  PerturbedFlow pf(fc, 3);
  Rng rng(4);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const auto x = random_pose(fc, rng);
    const auto back = pf.flow.inverse(pf.flow.forward(as_input(fc, x)).latent.value());
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
  }
  EXPECT_LT(worst, 1e-4);
}

// log|det J| from a central-difference Jacobian of the latent map.
double numerical_logdet(const PoseFlow& flow, const FlowConfig& fc, const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd J(n, n);
  const double h = 1e-6;
  for (int j = 0; j < n; ++j) {
    auto up = x, down = x;
    up[j] += h;
    down[j] -= h;
    const auto zu = flow.forward(as_input(fc, up)).latent.value();
    const auto zd = flow.forward(as_input(fc, down)).latent.value();
    for (int i = 0; i < n; ++i) J(i, j) = (zu[i] - zd[i]) / (2 * h);
  }
  return std::log(std::abs(J.fullPivLu().determinant()));
}

TEST(Flow, LogDetMatchesNumericalJacobian) {
  FlowConfig fc;
  fc.frames = 2;
  fc.joints = 3;
  fc.channels = 2;
  fc.steps = 3;
  fc.hidden = 5;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PerturbedFlow pf(fc, seed, 0.5);
    Rng rng(seed + 100);
    const auto x = random_pose(fc, rng);
    const double analytic = pf.flow.forward(as_input(fc, x)).logdet.item();
    const double numeric = numerical_logdet(pf.flow, fc, x);
    EXPECT_LT(std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-3), 1e-3)
        << "seed " << seed << " analytic " << analytic << " numeric " << numeric;
  }
}

TEST(Flow, LogProbIsGaussianPlusLogDet) {
  FlowConfig fc;
  fc.frames = 4;
  fc.joints = 3;
  PerturbedFlow pf(fc, 9);
  Rng rng(10);
  const auto x = random_pose(fc, rng);
  const auto out = pf.flow.forward(as_input(fc, x));
  double sq = 0.0;
  for (double z : out.latent.value()) sq += z * z;
  const double d = static_cast<double>(out.latent.size());
  const double expected = -0.5 * sq - 0.5 * d * std::log(2 * std::numbers::pi) + out.logdet.item();
  EXPECT_NEAR(pf.flow.log_prob(as_input(fc, x)).item(), expected, 1e-9);
}

TEST(Flow, IdentityAtInitialisation) {
  // Zero-initialised last conditioner layers and unit ActNorm make a fresh
  // flow a pure channel permutation with zero log-determinant.
  FlowConfig fc;
  fc.frames = 2;
  fc.joints = 3;
  nn::ParamRegistry reg;
  Rng rng(1);
  PoseFlow flow(reg, "flow", fc, rng);
  Rng data(2);
  const auto x = random_pose(fc, data);
  const auto out = flow.forward(as_input(fc, x));
  EXPECT_NEAR(out.logdet.item(), 0.0, 1e-12);
  auto sorted_in = x, sorted_out = out.latent.value();
  std::sort(sorted_in.begin(), sorted_in.end());
  std::sort(sorted_out.begin(), sorted_out.end());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(sorted_in[i], sorted_out[i], 1e-12);
}

TEST(Flow, ActNormInitStandardisesFirstStep) {
  FlowConfig fc;
  fc.frames = 4;
  fc.joints = 3;
  fc.steps = 1;
  nn::ParamRegistry reg;
  Rng rng(5);
  PoseFlow flow(reg, "flow", fc, rng);
  std::vector<std::vector<double>> batch;
  Rng data(6);
  for (int i = 0; i < 32; ++i) {
    auto x = random_pose(fc, data);
    for (double& v : x) v = 3.0 + 0.2 * v;
    batch.push_back(x);
  }
  flow.init_actnorm(batch);
  const auto* bias = reg.find("flow.step0.actnorm.bias");
  const auto* logscale = reg.find("flow.step0.actnorm.logscale");
  ASSERT_NE(bias, nullptr);
  ASSERT_NE(logscale, nullptr);
  // Oracle: per-channel mean and std of the raw batch.
  for (int c = 0; c < fc.channels; ++c) {
    double s = 0, sq = 0, n = 0;
    for (const auto& x : batch) {
      for (int r = 0; r < fc.frames * fc.joints; ++r) {
        const double v = x[r * fc.channels + c];
        s += v;
        sq += v * v;
        n += 1;
      }
    }
    const double mean = s / n, sd = std::sqrt(sq / n - mean * mean);
    const double scale = std::exp(logscale->at(c));
    EXPECT_NEAR((mean + bias->at(c)) * scale, 0.0, 1e-6);
    EXPECT_NEAR(sd * scale, 1.0, 1e-3);
  }
}

TEST(Flow, NonFiniteInputNamesStep) {
  FlowConfig fc;
  fc.frames = 2;
  fc.joints = 3;
  PerturbedFlow pf(fc, 2);
  std::vector<double> x(12, 0.5);
  x[3] = std::nan("");
  try {
    pf.flow.forward(as_input(fc, x));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Flow, NormalizedAdjacencyIsSymmetric) {
  const auto adj = normalized_adjacency(3, {{0, 1}, {1, 2}});
  ASSERT_EQ(adj.size(), 9u);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(adj[i * 3 + j], adj[j * 3 + i], 1e-12);
  EXPECT_EQ(adj[0 * 3 + 2], 0.0);
}

}  // namespace
}  // namespace guidex
