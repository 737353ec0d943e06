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

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "core/autograd.hpp"
#include "core/rng.hpp"

namespace guidex::testing {

inline ag::Var random_param(ag::Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(ag::numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return ag::Var::parameter(std::move(shape), std::move(v));
}

// Largest relative error between backprop gradients of `f` and central
// differences, over every element of every input. `f` must rebuild its graph
// from the inputs' current values on each call.
inline double max_grad_error(const std::vector<ag::Var>& inputs, const std::function<ag::Var()>& f, double h = 1e-6) {
  for (auto v : inputs) v.zero_grad();
  f().backward();
  double worst = 0.0;
  for (auto v : inputs) {
    const std::vector<double> analytic = v.grad();
    auto& val = v.mutable_value();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double orig = val[i];
      val[i] = orig + h;
      const double up = f().item();
      val[i] = orig - h;
      const double down = f().item();
      val[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double rel = std::abs(numeric - analytic[i]) /
                         std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// Reduces arbitrary outputs to a scalar with fixed random weights so every
// output element contributes a distinct gradient.
inline ag::Var weighted_sum(const ag::Var& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  std::vector<double> w(y.size());
  for (double& x : w) x = rng.normal();
  return ag::sum(ag::mul(ag::reshape(y, {static_cast<int>(y.size())}),
                         ag::Var::constant({static_cast<int>(y.size())}, std::move(w))));
}

// Fresh directory under the build tree's temp area; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("guidex_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace guidex::testing
