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

// Token encoders and heads: the joint space-time transformer used for both
// the RGB and masked-RGB branches, the large-kernel spatio-temporal gate head
// that turns behaviour features into motion latents, projection heads for
// appearance latents, and the scene image feature extractor.
//
// Token features are [P, C] with rows in (t, h, w) row-major order.

#include <span>
#include <string>
#include <vector>

#include "core/autograd.hpp"
#include "core/nn.hpp"
#include "core/tokenizer.hpp"

namespace guidex {

struct EncoderConfig {
  GridShape grid;
  int in_features = kCubeT * kCubeS * kCubeS * 3;
  int dim = 128;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int out_dim = 128;
};

class SpaceTimeEncoder {
 public:
  SpaceTimeEncoder() = default;
  // with_mask_token adds the learned replacement token used on masked rows.
  SpaceTimeEncoder(nn::ParamRegistry& reg, const std::string& prefix, const EncoderConfig& cfg, Rng& rng,
                   bool with_mask_token);

  // Cube features [P, in] -> tokens [P, dim].
  ag::Var embed(const ag::Var& cube_features) const { return cube_embed(cube_features, embed_); }
  // Tokens [P, dim] -> [P, out_dim]. Positional embeddings are added here.
  ag::Var encode(const ag::Var& tokens) const;

  const ag::Var& mask_token() const { return mask_token_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    nn::LayerNorm ln1, ln2;
    nn::Linear qkv, proj, fc1, fc2;
  };
  ag::Var attention(const Block& b, const ag::Var& x) const;

  EncoderConfig cfg_;
  nn::Linear embed_;
  ag::Var pos_;
  ag::Var mask_token_;
  std::vector<Block> blocks_;
  nn::LayerNorm final_ln_;
  nn::Linear out_;
};

// CONV(DWDC(DWC(x))) on a single-channel [t, h, w] volume, same padding.
// DWC: (k/d)^3 kernel with dilation d; DWDC: (2d-1)^3 dense kernel;
// CONV: 1^3 kernel (scale and bias).
struct Lka3d {
  ag::Var dwc_kernel, dwc_bias;
  ag::Var dwdc_kernel, dwdc_bias;
  ag::Var conv_weight, conv_bias;
  int dilation = 1;

  Lka3d() = default;
  // Throws ValidationError if k is not divisible by d or k/d is even.
  Lka3d(nn::ParamRegistry& reg, const std::string& prefix, int kernel, int dilation, Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
  int dwc_size() const { return dwc_kernel.dim(0); }
  int dwdc_size() const { return dwdc_kernel.dim(0); }
};

// e_out = e + e * sigmoid(lka3d(channel_mean(e))), with one gate value per
// token shared across channels.
struct LstaBlock {
  Lka3d lka;
  ag::Var operator()(const ag::Var& e, const GridShape& grid) const;
};

// Duplicates each of t rows into 2 frames and applies a distinct linear map
// per frame: [t, in] -> [2t, out].
struct TemporalExpansion {
  std::vector<nn::Linear> frames;

  TemporalExpansion() = default;
  TemporalExpansion(nn::ParamRegistry& reg, const std::string& prefix, int t, int in, int out, Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
};

struct HeadConfig {
  GridShape grid;
  int in_dim = 128;
  int hidden = 128;
  int out_dim = 16;
  int lsta_blocks = 2;
  int kernel = 21;
  int dilation = 3;
};

// LSTA blocks -> spatial mean pool per temporal slot -> MLP -> temporal
// expansion. [P, C_b] -> [T, C_mo].
class LstaHead {
 public:
  LstaHead() = default;
  LstaHead(nn::ParamRegistry& reg, const std::string& prefix, const HeadConfig& cfg, Rng& rng);
  ag::Var operator()(const ag::Var& e) const;
  const std::vector<LstaBlock>& blocks() const { return blocks_; }

 private:
  HeadConfig cfg_;
  std::vector<LstaBlock> blocks_;
  nn::Linear fc1_, fc2_;
  TemporalExpansion expand_;
};

// Two-layer GELU perceptron applied per token, then spatial mean pool per
// temporal slot and temporal expansion. [P, in] -> [T, out].
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(nn::ParamRegistry& reg, const std::string& prefix, const GridShape& grid, int in, int hidden,
                 int out, Rng& rng);
  ag::Var operator()(const ag::Var& rows) const;

 private:
  GridShape grid_;
  nn::Linear fc1_, fc2_;
  TemporalExpansion expand_;
};

// Three stride-2 3x3 convolutions with GELU, then global average pooling.
// Image [H, W, 3] -> [1, out].
class SceneExtractor {
 public:
  SceneExtractor() = default;
  SceneExtractor(nn::ParamRegistry& reg, const std::string& prefix, int out, Rng& rng);
  ag::Var operator()(std::span<const double> image, int H, int W) const;

 private:
  struct Conv {
    ag::Var weight, bias;
  };
  std::vector<Conv> layers_;
};

}  // namespace guidex
