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

// Memory banks of unit-norm slots with softmax-of-cosine addressing.
//
// Behaviour and scene banks are trained by gradient descent; the matching
// bank stores concatenated behaviour/scene address weights and is written
// only through update_matching during the final pass.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/autograd.hpp"
#include "core/nn.hpp"

namespace guidex {

class MemoryBank {
 public:
  MemoryBank() = default;
  // Registers an [N, D] slot parameter initialised to random unit vectors.
  MemoryBank(nn::ParamRegistry& reg, const std::string& name, int slots, int dim, std::uint64_t seed);

  const ag::Var& slots() const { return slots_; }
  ag::Var& slots() { return slots_; }
  int size() const { return slots_.dim(0); }
  int dim() const { return slots_.dim(1); }
  const std::string& name() const { return name_; }
  std::uint64_t seed() const { return seed_; }

  // Rescales every slot to unit norm in place.
  void renormalize();
  // Overwrites the leading slots with a greedy farthest-point (cosine)
  // selection from `queries`, then renormalizes. Slots beyond the number of
  // distinct queries keep their values.
  void seed_from_queries(const std::vector<std::vector<double>>& queries);
  // SHA-256 of the slot values.
  std::string hash() const;

 private:
  std::string name_;
  std::uint64_t seed_ = 0;
  ag::Var slots_;
};

// Row p of the result is softmax_i cos(query_p, slot_i). Zero-norm queries
// yield a uniform row.
ag::Var address(const ag::Var& queries, const ag::Var& slots);
// Convex combination of slots: weights [P, N] x slots [N, D].
ag::Var read(const ag::Var& weights, const ag::Var& slots);
// [flatten(W_b), flatten(W_s)] as a [1, P*N_b + N_s] row.
ag::Var concat_weights(const ag::Var& w_behavior, const ag::Var& w_scene);

// Sum over queries of [ |q - m_1st| - |q - m_2nd| + margin ]_+ with the two
// nearest slots by Euclidean distance.
ag::Var separateness_loss(const ag::Var& queries, const ag::Var& slots, double margin);

enum class Segment { kBehavior, kScene };

// Behaviour-scene matching bank with slots of length L_b + L_s.
class MatchingMemory {
 public:
  MatchingMemory() = default;
  MatchingMemory(nn::ParamRegistry& reg, const std::string& name, int slots, int behavior_len, int scene_len,
                 std::uint64_t seed);

  MemoryBank& bank() { return bank_; }
  const MemoryBank& bank() const { return bank_; }
  int behavior_len() const { return behavior_len_; }
  int scene_len() const { return scene_len_; }

  // Opens/closes the final pass; update() outside it throws StageError.
  void begin_final_round() { final_round_ = true; }
  void end_final_round() { final_round_ = false; }
  bool in_final_round() const { return final_round_; }

  // Replaces slots by a greedy farthest-point (cosine) selection from
  // `queries`, used when random slots would all lose to a single one.
  void seed_from_queries(const std::vector<std::vector<double>>& queries);

  // For each slot i: m_i <- normalize(m_i + sum_{v in U_i} p_v q_v), where
  // U_i are the queries whose nearest slot (by cosine) is i and p is the
  // softmax over U_i of those cosines.
  void update(const std::vector<std::vector<double>>& queries);

  // softmax_i cos(query, segment of slot i).
  std::vector<double> match(std::span<const double> query, Segment seg) const;

 private:
  MemoryBank bank_;
  int behavior_len_ = 0;
  int scene_len_ = 0;
  bool final_round_ = false;
};

}  // namespace guidex
