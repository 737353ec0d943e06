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

// The full network: pose flow (guidance), RGB encoder + head (motion
// exploration), masked encoder + projection heads (appearance), scene
// extractor and the three memory banks.

#include <string>
#include <vector>

#include "core/autograd.hpp"
#include "core/config.hpp"
#include "core/encoders.hpp"
#include "core/flow.hpp"
#include "core/memory.hpp"
#include "core/nn.hpp"
#include "core/synthdata.hpp"
#include "core/tokenizer.hpp"

namespace guidex {

struct ModelShape {
  int T = 8, H = 64, W = 64, V = synth::kJoints, C = synth::kPoseChannels;
  int dim = 128, depth = 4, heads = 4, mlp_ratio = 4;
  int c_b = 128, c_app = 64, c_s = 64, head_hidden = 128;
  int l_lsta = 2, lka_kernel = 21, lka_dilation = 3;
  int n_b = 20, n_s = 10, n_r = 20;
  int flow_steps = 8, flow_hidden = 16;
  std::vector<std::pair<int, int>> edges;  // empty -> skeleton edges when V == 8, else chain

  static ModelShape from_config(const Config& cfg);
  GridShape grid() const { return grid_for_clip(T, H, W); }
  int c_mo() const { return V * C; }
  int behavior_len() const { return grid().tokens() * n_b; }
  int scene_len() const { return n_s; }
};

// One clip prepared for the network.
struct ClipInput {
  ag::Var pose;      // [T*V, C]
  ag::Var cubes;     // [P, 2*8*8*3]
  std::vector<double> scene;  // [H, W, 3]
};

ClipInput prepare_clip(const synth::ClipSample& clip);

struct ForwardOutputs {
  ag::Var f_sk;   // [T, C_mo], constant
  ag::Var e_b;    // [P, C_b]
  ag::Var f_rgb;  // [T, C_mo]
  ag::Var w_b;    // [P, N_b]
  ag::Var f_b;    // [P, C_b]
  ag::Var f_u;    // [T, C_app], computed from detached e_b
  ag::Var e_s;    // [1, C_s]
  ag::Var w_s;    // [1, N_s]
  ag::Var w_r;    // [1, L_b + L_s]
};

class Model {
 public:
  Model(const ModelShape& shape, std::uint64_t seed);

  const ModelShape& shape() const { return shape_; }
  nn::ParamRegistry& params() { return reg_; }
  const nn::ParamRegistry& params() const { return reg_; }

  // Frozen guidance target.
  ag::Var motion_target(const ag::Var& pose) const;
  // Everything except the masked branch.
  ForwardOutputs forward(const ClipInput& in) const;
  // Masked-branch appearance latent f_m for one mask.
  ag::Var masked_latent(const ClipInput& in, std::span<const int> masked_tokens) const;

  std::vector<ag::Var> flow_parameters() const;
  // Trained in the joint stage: everything but the flow and matching bank.
  std::vector<ag::Var> joint_parameters() const;
  std::vector<ag::Var> rgb_encoder_parameters() const;

  PoseFlow flow;
  SpaceTimeEncoder rgb_encoder;
  LstaHead motion_head;
  ProjectionHead behavior_projection;  // H_u
  SpaceTimeEncoder mask_encoder;
  ProjectionHead mask_projection;
  SceneExtractor scene_extractor;
  MemoryBank behavior_memory;
  MemoryBank scene_memory;
  MatchingMemory matching_memory;

 private:
  ModelShape shape_;
  nn::ParamRegistry reg_;
};

// Prefixes used for parameter names.
inline constexpr const char* kFlowPrefix = "flow";
inline constexpr const char* kRgbPrefix = "rgb_encoder";
inline constexpr const char* kMatchingName = "memory.matching";

}  // namespace guidex
