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

#include <gtest/gtest.h>

#include <cmath>

#include "core/errors.hpp"
#include "core/losses.hpp"
#include "test_util.hpp"

namespace guidex {
namespace {

ag::Var row(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return ag::Var::constant({1, n}, std::move(v));
}

ag::Var scalar(double v) { return ag::Var::constant({1}, {v}); }

TEST(LossMotion, Examples) {
  EXPECT_NEAR(loss_motion(row({0.3, -1.2}), row({0.3, -1.2})).item(), 0.0, 1e-9);
  EXPECT_NEAR(loss_motion(row({1, 0}), row({0, 1})).item(), 2.0, 1e-9);
}

TEST(LossAppearance, Examples) {
  const auto u = row({0.5, -2, 1});
  EXPECT_NEAR(loss_appearance(u, u).item(), 0.0, 1e-9);
  EXPECT_NEAR(loss_appearance(row({1, 0, 0}), row({0, 3, 0})).item(), 1.0, 1e-9);
  EXPECT_NEAR(loss_appearance(ag::scale(u, -1.0), u).item(), 2.0, 1e-9);
  EXPECT_NEAR(loss_appearance(row({0, 0, 0}), u).item(), 1.0, 1e-9);
}

TEST(LossAppearance, MeanOverRows) {
  const auto m = ag::Var::constant({2, 2}, {1, 0, 1, 0});
  const auto u = ag::Var::constant({2, 2}, {1, 0, -1, 0});
  EXPECT_NEAR(loss_appearance(m, u).item(), 1.0, 1e-9);
}

LossParts parts(double mo, double app, double b, double s, double r) {
  LossParts p;
  p.motion = scalar(mo);
  p.appearance = scalar(app);
  p.sep_behavior = scalar(b);
  p.sep_scene = scalar(s);
  p.sep_matching = scalar(r);
  return p;
}

TEST(TotalLoss, Examples) {
  EXPECT_NEAR(total_loss(parts(1, 2, 1, 1.5, 0.5), {0.5, 0.1, 1.0}).item(), 2.3, 1e-9);
  EXPECT_NEAR(total_loss(parts(4.5, 2, 1, 1, 1), {0.0, 0.0, 1.0}).item(), 4.5, 1e-9);
  EXPECT_NEAR(total_loss(parts(0, 0, 0, 0, 0), {}).item(), 0.0, 1e-9);
}

TEST(TotalLoss, NonFiniteThrows) {
  EXPECT_THROW(total_loss(parts(1, std::nan(""), 0, 0, 0), {}), NumericalError);
  EXPECT_THROW(total_loss(parts(INFINITY, 0, 0, 0, 0), {}), NumericalError);
}

TEST(LossGradients, MotionAndAppearance) {
  Rng rng(1);
  auto a = testing::random_param({3, 4}, rng);
  auto b = testing::random_param({3, 4}, rng);
  EXPECT_LT(testing::max_grad_error({a, b}, [&] { return loss_motion(a, b); }), 1e-3);
  EXPECT_LT(testing::max_grad_error({a, b}, [&] { return loss_appearance(a, b); }), 1e-3);
}

ModelShape tiny_shape() {
  ModelShape s;
  s.H = s.W = 32;
  s.dim = 16;
  s.depth = 1;
  s.heads = 2;
  s.c_b = s.c_app = s.c_s = s.head_hidden = 8;
  s.l_lsta = 1;
  s.n_b = s.n_s = s.n_r = 4;
  s.flow_steps = 2;
  s.flow_hidden = 4;
  return s;
}

ClipInput random_clip(const ModelShape& s, Rng& rng) {
  std::vector<double> rgb(static_cast<std::size_t>(s.T * s.H * s.W * 3));
  for (double& v : rgb) v = rng.uniform();
  std::vector<double> pose(static_cast<std::size_t>(s.T * s.V * s.C));
  for (double& v : pose) v = rng.uniform();
  std::vector<double> scene(static_cast<std::size_t>(s.H * s.W * 3));
  for (double& v : scene) v = rng.uniform();
  return {ag::Var::constant({s.T * s.V, s.C}, pose), cube_features(rgb, s.T, s.H, s.W, 3), scene};
}

double grad_norm(const std::vector<ag::Var>& ps) {
  double s = 0;
  for (const auto& p : ps)
    for (double g : p.grad()) s += g * g;
  return std::sqrt(s);
}

TEST(GradientBarrier, AppearanceLossDoesNotReachRgbEncoder) {
  const auto shape = tiny_shape();
  Model model(shape, 3);
  Rng rng(4);
  const auto in = random_clip(shape, rng);
  const std::vector<int> masked{0, 1, 4, 5};
  const auto p = clip_losses(model, in, masked, {});
  model.params().zero_grad();
  p.appearance.backward();
  EXPECT_EQ(grad_norm(model.rgb_encoder_parameters()), 0.0);
  EXPECT_GT(grad_norm(model.params().with_prefix("mask_encoder")), 0.0);
  EXPECT_GT(grad_norm(model.params().with_prefix("behavior_projection")), 0.0);

  // The motion loss, by contrast, trains the RGB encoder.
  model.params().zero_grad();
  p.motion.backward();
  EXPECT_GT(grad_norm(model.rgb_encoder_parameters()), 0.0);
  EXPECT_EQ(grad_norm(model.flow_parameters()), 0.0);
}

TEST(ClipLosses, TotalMatchesParts) {
  const auto shape = tiny_shape();
  const Model model(shape, 5);
  Rng rng(6);
  const auto in = random_clip(shape, rng);
  const std::vector<int> masked{2, 3};
  const LossWeights w{0.7, 0.2, 0.5};
  const auto p = clip_losses(model, in, masked, w);
  const double expect = p.motion.item() + w.alpha * p.appearance.item() +
                        w.beta * (p.sep_behavior.item() + p.sep_scene.item() + p.sep_matching.item());
  EXPECT_NEAR(p.total.item(), expect, 1e-9);
}

}  // namespace
}  // namespace guidex
