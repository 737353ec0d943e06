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

#include "core/model.hpp"

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace guidex {

ModelShape ModelShape::from_config(const Config& cfg) {
  ModelShape s;
  auto i = [&](const char* k) { return static_cast<int>(cfg.get_int(k)); };
  s.T = i("model.clip_length");
  s.H = i("world.frame_height");
  s.W = i("world.frame_width");
  s.V = i("world.joints");
  s.dim = i("model.dim");
  s.depth = i("model.depth");
  s.heads = i("model.heads");
  s.mlp_ratio = i("model.mlp_ratio");
  s.c_b = i("model.c_b");
  s.c_app = i("model.c_app");
  s.c_s = i("model.c_s");
  s.head_hidden = i("model.head_hidden");
  s.l_lsta = i("model.l_lsta");
  s.lka_kernel = i("model.lka_kernel");
  s.lka_dilation = i("model.lka_dilation");
  s.n_b = i("model.n_b");
  s.n_s = i("model.n_s");
  s.n_r = i("model.n_r");
  s.flow_steps = i("model.flow_steps");
  s.flow_hidden = i("model.flow_hidden");
  if (s.depth < 0 || s.l_lsta < 0 || s.dim < 1 || s.heads < 1 || s.c_b < 1 || s.c_app < 1 || s.c_s < 1) {
    throw ValidationError("model sizes must be positive");
  }
  return s;
}

ClipInput prepare_clip(const synth::ClipSample& clip) {
  ClipInput in;
  in.pose = ag::Var::constant({clip.T * clip.V, synth::kPoseChannels}, clip.pose);
  in.cubes = cube_features(clip.rgb, clip.T, clip.H, clip.W, synth::kRgbChannels);
  in.scene = clip.scene_image;
  return in;
}

Model::Model(const ModelShape& shape, std::uint64_t seed) : shape_(shape) {
  const GridShape grid = shape.grid();
  auto rng_for = [seed](const char* stream) { return Rng(derive_seed(seed, stream)); };

  FlowConfig fc;
  fc.steps = shape.flow_steps;
  fc.hidden = shape.flow_hidden;
  fc.frames = shape.T;
  fc.joints = shape.V;
  fc.channels = shape.C;
  fc.edges = shape.edges;
  if (fc.edges.empty() && shape.V == synth::kJoints) fc.edges = synth::skeleton_edges();
  Rng r_flow = rng_for("init.flow");
  flow = PoseFlow(reg_, kFlowPrefix, fc, r_flow);

  EncoderConfig ec;
  ec.grid = grid;
  ec.dim = shape.dim;
  ec.depth = shape.depth;
  ec.heads = shape.heads;
  ec.mlp_ratio = shape.mlp_ratio;
  ec.out_dim = shape.c_b;
  Rng r_rgb = rng_for("init.rgb_encoder");
  rgb_encoder = SpaceTimeEncoder(reg_, kRgbPrefix, ec, r_rgb, false);

  HeadConfig hc;
  hc.grid = grid;
  hc.in_dim = shape.c_b;
  hc.hidden = shape.head_hidden;
  hc.out_dim = shape.c_mo();
  hc.lsta_blocks = shape.l_lsta;
  hc.kernel = shape.lka_kernel;
  hc.dilation = shape.lka_dilation;
  Rng r_head = rng_for("init.motion_head");
  motion_head = LstaHead(reg_, "motion_head", hc, r_head);

  Rng r_pu = rng_for("init.behavior_projection");
  behavior_projection = ProjectionHead(reg_, "behavior_projection", grid, shape.c_b, shape.head_hidden, shape.c_app, r_pu);

  Rng r_mask = rng_for("init.mask_encoder");
  mask_encoder = SpaceTimeEncoder(reg_, "mask_encoder", ec, r_mask, true);
  Rng r_pm = rng_for("init.mask_projection");
  mask_projection = ProjectionHead(reg_, "mask_projection", grid, shape.c_b, shape.head_hidden, shape.c_app, r_pm);

  Rng r_scene = rng_for("init.scene_extractor");
  scene_extractor = SceneExtractor(reg_, "scene_extractor", shape.c_s, r_scene);

  behavior_memory = MemoryBank(reg_, "memory.behavior", shape.n_b, shape.c_b, derive_seed(seed, "memory.behavior"));
  scene_memory = MemoryBank(reg_, "memory.scene", shape.n_s, shape.c_s, derive_seed(seed, "memory.scene"));
  matching_memory = MatchingMemory(reg_, kMatchingName, shape.n_r, shape.behavior_len(), shape.scene_len(),
                                   derive_seed(seed, "memory.matching"));
}

ag::Var Model::motion_target(const ag::Var& pose) const {
  ag::NoGradGuard guard;
  return flow.forward(pose).latent;
}

ForwardOutputs Model::forward(const ClipInput& in) const {
  ForwardOutputs o;
  o.f_sk = motion_target(in.pose);
  o.e_b = rgb_encoder.encode(rgb_encoder.embed(in.cubes));
  o.f_rgb = motion_head(o.e_b);
  const ag::Var& mb = behavior_memory.slots();
  o.w_b = address(o.e_b, mb);
  o.f_b = read(o.w_b, mb);
  // The appearance target sees the behaviour read through a detached query,
  // so appearance gradients stop at the memory and never reach the RGB path.
  o.f_u = behavior_projection(read(address(ag::detach(o.e_b), mb), mb));
  o.e_s = scene_extractor(in.scene, shape_.H, shape_.W);
  o.w_s = address(o.e_s, scene_memory.slots());
  o.w_r = concat_weights(o.w_b, o.w_s);
  return o;
}

ag::Var Model::masked_latent(const ClipInput& in, std::span<const int> masked_tokens) const {
  const ag::Var tokens = apply_mask(mask_encoder.embed(in.cubes), masked_tokens, mask_encoder.mask_token());
  return mask_projection(mask_encoder.encode(tokens));
}

std::vector<ag::Var> Model::flow_parameters() const { return reg_.with_prefix(kFlowPrefix); }

std::vector<ag::Var> Model::joint_parameters() const {
  std::vector<ag::Var> out;
  for (const auto& p : reg_.all()) {
    if (p.name.rfind(std::string(kFlowPrefix) + ".", 0) == 0 || p.name == kMatchingName) continue;
    out.push_back(p.var);
  }
  return out;
}

std::vector<ag::Var> Model::rgb_encoder_parameters() const { return reg_.with_prefix(std::string(kRgbPrefix) + "."); }

}  // namespace guidex
