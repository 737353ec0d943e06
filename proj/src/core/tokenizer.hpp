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

// Cube tokenization of RGB clips and blockwise token masking.

#include <cstdint>
#include <span>
#include <vector>

#include "core/autograd.hpp"
#include "core/nn.hpp"

namespace guidex {

inline constexpr int kCubeT = 2;
inline constexpr int kCubeS = 8;

struct GridShape {
  int t = 0, h = 0, w = 0;
  int tokens() const { return t * h * w; }
  int spatial() const { return h * w; }
};

// Throws ValidationError if T is odd or H, W are not multiples of 8.
GridShape grid_for_clip(int T, int H, int W);

// Flattens each disjoint 2x8x8xC cube of a [T,H,W,C] clip into one row.
// Rows follow (i, j, k) row-major order; within a row the layout is
// (dt, dy, dx, c). Output is [P, 2*8*8*C].
ag::Var cube_features(std::span<const double> clip, int T, int H, int W, int C);

// Learned projection of cube features to D channels.
inline ag::Var cube_embed(const ag::Var& features, const nn::Linear& projection) { return projection(features); }

struct MaskPair {
  GridShape grid;
  std::vector<std::uint8_t> spatial;  // [h*w], 1 = masked
  std::vector<int> mask;              // token indices, ascending
  std::vector<int> complement;        // the remaining token indices

  MaskPair swapped() const;
};

inline constexpr int kMinBlockArea = 4;
inline constexpr double kMinAspect = 0.3;

// Samples ceil(ratio*h*w) spatial positions as a union of rectangular blocks,
// then replicates the pattern over all t slices. If blocks cannot reach the
// target exactly, the remainder is filled with cells bordering the mask.
// Throws ValidationError if ratio is outside (0,1) or the target is smaller
// than one block.
MaskPair sample_block_mask(const GridShape& grid, double ratio, Rng& rng);

// Replaces the rows listed in `masked` with the shared mask token. Tokens
// [P, D], mask_token [D]. Throws std::out_of_range on bad indices.
ag::Var apply_mask(const ag::Var& tokens, std::span<const int> masked, const ag::Var& mask_token);

}  // namespace guidex
