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

#include "core/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/errors.hpp"
#include "core/log.hpp"
#include "core/rng.hpp"
#include "core/tensor_io.hpp"

namespace guidex {

namespace {

constexpr double kTiny = 1e-12;

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na < kTiny || nb < kTiny) return 0.0;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
  return d / (na * nb);
}

std::vector<double> softmax(const std::vector<double>& x) {
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += out[i] = std::exp(x[i] - mx);
  for (double& v : out) v /= z;
  return out;
}

}  // namespace

MemoryBank::MemoryBank(nn::ParamRegistry& reg, const std::string& name, int slots, int dim, std::uint64_t seed)
    : name_(name), seed_(seed) {
  if (slots < 2) throw ValidationError("memory bank " + name + " needs at least 2 slots");
  if (dim < 1) throw ValidationError("memory bank " + name + " needs a positive width");
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(slots) * dim);
  for (double& x : v) x = rng.normal();
  slots_ = reg.add(name, {slots, dim}, std::move(v));
  renormalize();
}

void MemoryBank::renormalize() {
  auto& v = slots_.mutable_value();
  const int n = size(), d = dim();
  for (int i = 0; i < n; ++i) {
    std::span<double> row(v.data() + static_cast<std::size_t>(i) * d, d);
    const double nr = norm(row);
    if (nr < kTiny) continue;
    for (double& x : row) x /= nr;
  }
}

std::string MemoryBank::hash() const {
  const auto& v = slots_.value();
  return io::sha256_hex({reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)});
}

ag::Var address(const ag::Var& queries, const ag::Var& slots) {
  if (queries.rank() != 2 || slots.rank() != 2 || queries.dim(1) != slots.dim(1)) {
    throw ValidationError("address: query width " + ag::shape_str(queries.shape()) + " vs bank " +
                          ag::shape_str(slots.shape()));
  }
  const int m = queries.dim(0), d = queries.dim(1);
  for (int i = 0; i < m; ++i) {
    if (norm({queries.value().data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)}) < kTiny) {
      log::warn("address: zero-norm query, using a uniform row");
    }
  }
  const ag::Var cos = ag::matmul_nt(ag::normalize_rows(queries, kTiny), ag::normalize_rows(slots, kTiny));
  return ag::softmax_rows(cos);
}

ag::Var read(const ag::Var& weights, const ag::Var& slots) { return ag::matmul(weights, slots); }

ag::Var concat_weights(const ag::Var& w_behavior, const ag::Var& w_scene) {
  const ag::Var parts[2] = {ag::reshape(w_behavior, {1, static_cast<int>(w_behavior.size())}),
                            ag::reshape(w_scene, {1, static_cast<int>(w_scene.size())})};
  return ag::concat_cols(parts);
}

ag::Var separateness_loss(const ag::Var& queries, const ag::Var& slots, double margin) {
  const int m = queries.dim(0), d = queries.dim(1), n = slots.dim(0);
  if (n < 2) throw ValidationError("separateness loss needs at least 2 slots");
  if (slots.dim(1) != d) throw ValidationError("separateness loss: width mismatch");
  std::vector<int> first(m), second(m);
  const auto& q = queries.value();
  const auto& s = slots.value();
  for (int i = 0; i < m; ++i) {
    double b1 = std::numeric_limits<double>::infinity(), b2 = b1;
    int i1 = 0, i2 = 1;
    for (int j = 0; j < n; ++j) {
      double dist = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = q[static_cast<std::size_t>(i) * d + k] - s[static_cast<std::size_t>(j) * d + k];
        dist += diff * diff;
      }
      if (dist < b1) {
        b2 = b1;
        i2 = i1;
        b1 = dist;
        i1 = j;
      } else if (dist < b2) {
        b2 = dist;
        i2 = j;
      }
    }
    first[i] = i1;
    second[i] = i2;
  }
  const ag::Var d1 = ag::row_norm(ag::sub(queries, ag::gather_rows(slots, first)));
  const ag::Var d2 = ag::row_norm(ag::sub(queries, ag::gather_rows(slots, second)));
  return ag::sum(ag::relu(ag::add_scalar(ag::sub(d1, d2), margin)));
}

MatchingMemory::MatchingMemory(nn::ParamRegistry& reg, const std::string& name, int slots, int behavior_len,
                               int scene_len, std::uint64_t seed)
    : bank_(reg, name, slots, behavior_len + scene_len, seed), behavior_len_(behavior_len), scene_len_(scene_len) {}

void MemoryBank::seed_from_queries(const std::vector<std::vector<double>>& queries) {
  if (queries.empty()) return;
  const int n = size(), d = dim();
  std::vector<int> chosen = {0};
  std::vector<double> best(queries.size(), -2.0);
  while (static_cast<int>(chosen.size()) < n && chosen.size() < queries.size()) {
    const auto& last = queries[static_cast<std::size_t>(chosen.back())];
    int pick = -1;
    double lowest = 2.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      best[i] = std::max(best[i], cosine(queries[i], last));
      if (best[i] < lowest) {
        lowest = best[i];
        pick = static_cast<int>(i);
      }
    }
    if (pick < 0 || lowest >= 1.0 - 1e-15) break;  // remaining queries duplicate chosen ones
    chosen.push_back(pick);
  }
  auto& v = slots_.mutable_value();
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    const auto& q = queries[static_cast<std::size_t>(chosen[c])];
    if (static_cast<int>(q.size()) != d) throw ValidationError("memory query width mismatch for " + name_);
    std::copy(q.begin(), q.end(), v.begin() + static_cast<std::ptrdiff_t>(c * d));
  }
  renormalize();
}

void MatchingMemory::seed_from_queries(const std::vector<std::vector<double>>& queries) {
  bank_.seed_from_queries(queries);
}

void MatchingMemory::update(const std::vector<std::vector<double>>& queries) {
  if (!final_round_) throw StageError("matching memory update requested outside the final round");
  if (queries.empty()) return;
  const int n = bank_.size(), d = bank_.dim();
  auto& v = bank_.slots().mutable_value();
  std::vector<std::vector<int>> members(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> sims(static_cast<std::size_t>(n));
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    if (static_cast<int>(q.size()) != d) throw ValidationError("matching query width mismatch");
    int best = 0;
    double best_cos = -2.0;
    for (int i = 0; i < n; ++i) {
      const double c = cosine(q, {v.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)});
      if (c > best_cos) {
        best_cos = c;
        best = i;
      }
    }
    members[best].push_back(static_cast<int>(qi));
    sims[best].push_back(best_cos);
  }
  for (int i = 0; i < n; ++i) {
    if (members[i].empty()) continue;
    const std::vector<double> p = softmax(sims[i]);
    std::span<double> slot(v.data() + static_cast<std::size_t>(i) * d, d);
    for (std::size_t u = 0; u < members[i].size(); ++u) {
      const auto& q = queries[static_cast<std::size_t>(members[i][u])];
      for (int k = 0; k < d; ++k) slot[k] += p[u] * q[k];
    }
    const double nr = norm(slot);
    if (nr >= kTiny) {
      for (double& x : slot) x /= nr;
    }
  }
}

std::vector<double> MatchingMemory::match(std::span<const double> query, Segment seg) const {
  const int off = seg == Segment::kBehavior ? 0 : behavior_len_;
  const int len = seg == Segment::kBehavior ? behavior_len_ : scene_len_;
  if (static_cast<int>(query.size()) != len) throw ValidationError("match: query length differs from the segment");
  const int n = bank_.size(), d = bank_.dim();
  const auto& v = bank_.slots().value();
  std::vector<double> c(static_cast<std::size_t>(n));
  bool degenerate = norm(query) < kTiny;
  for (int i = 0; i < n; ++i) {
    std::span<const double> segv(v.data() + static_cast<std::size_t>(i) * d + off, static_cast<std::size_t>(len));
    if (norm(segv) < kTiny) degenerate = true;
    c[i] = cosine(query, segv);
  }
  if (degenerate) log::warn("match: zero-norm vector in matching");
  return softmax(c);
}

}  // namespace guidex
