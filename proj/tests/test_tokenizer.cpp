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
#include <numeric>
#include <set>

#include "core/errors.hpp"
#include "core/model.hpp"
#include "core/tokenizer.hpp"

namespace guidex {
namespace {

TEST(Tokenizer, GridShape) {
  const auto g = grid_for_clip(8, 64, 64);
  EXPECT_EQ(g.t, 4);
  EXPECT_EQ(g.h, 8);
  EXPECT_EQ(g.w, 8);
  EXPECT_EQ(g.tokens(), 256);
  EXPECT_THROW(grid_for_clip(7, 64, 64), ValidationError);
  EXPECT_THROW(grid_for_clip(8, 60, 64), ValidationError);
  EXPECT_THROW(grid_for_clip(8, 64, 12), ValidationError);
}

TEST(Tokenizer, CubeFeaturesMatchDirectIndexing) {
  const int T = 4, H = 16, W = 24, C = 3;
  std::vector<double> clip(static_cast<std::size_t>(T * H * W * C));
  std::iota(clip.begin(), clip.end(), 0.0);
  const auto f = cube_features(clip, T, H, W, C);
  const auto g = grid_for_clip(T, H, W);
  ASSERT_EQ(f.dim(0), g.tokens());
  ASSERT_EQ(f.dim(1), kCubeT * kCubeS * kCubeS * C);
  for (int i = 0; i < g.t; ++i)
    for (int j = 0; j < g.h; ++j)
      for (int k = 0; k < g.w; ++k)
        for (int dt = 0; dt < kCubeT; ++dt)
          for (int dy = 0; dy < kCubeS; ++dy)
            for (int dx = 0; dx < kCubeS; ++dx)
              for (int c = 0; c < C; ++c) {
                const int row = (i * g.h + j) * g.w + k;
                const int col = ((dt * kCubeS + dy) * kCubeS + dx) * C + c;
                const int t = i * kCubeT + dt, y = j * kCubeS + dy, x = k * kCubeS + dx;
                ASSERT_EQ(f.at(static_cast<std::size_t>(row) * f.dim(1) + col),
                          clip[static_cast<std::size_t>(((t * H + y) * W + x) * C + c)]);
              }
}

void check_partition(const MaskPair& m, double ratio) {
  const auto& g = m.grid;
  const int target = static_cast<int>(std::ceil(ratio * g.spatial()));
  int masked_cells = 0;
  for (auto s : m.spatial) masked_cells += s;
  ASSERT_EQ(masked_cells, target);
  ASSERT_EQ(static_cast<int>(m.mask.size() + m.complement.size()), g.tokens());
  std::set<int> seen;
  for (int idx : m.mask) {
    ASSERT_TRUE(seen.insert(idx).second);
    ASSERT_EQ(m.spatial[idx % g.spatial()], 1);  // same pattern in every slice
  }
  for (int idx : m.complement) {
    ASSERT_TRUE(seen.insert(idx).second);
    ASSERT_EQ(m.spatial[idx % g.spatial()], 0);
  }
  ASSERT_EQ(static_cast<int>(seen.size()), g.tokens());
  ASSERT_TRUE(std::is_sorted(m.mask.begin(), m.mask.end()));
  ASSERT_TRUE(std::is_sorted(m.complement.begin(), m.complement.end()));
}

TEST(Tokenizer, BlockMaskPartitionsTokens) {
  const GridShape g{4, 8, 8};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    check_partition(sample_block_mask(g, 0.5, rng), 0.5);
  }
}

TEST(Tokenizer, BlockMaskOtherRatiosAndGrids) {
  for (const double ratio : {0.25, 0.4, 0.75, 0.9}) {
    for (const GridShape g : {GridShape{4, 8, 8}, GridShape{2, 4, 4}, GridShape{3, 5, 7}}) {
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed * 7 + 1);
        check_partition(sample_block_mask(g, ratio, rng), ratio);
      }
    }
  }
}

TEST(Tokenizer, BlockMaskRejectsBadRatio) {
  Rng rng(1);
  const GridShape g{4, 8, 8};
  EXPECT_THROW(sample_block_mask(g, 0.0, rng), ValidationError);
  EXPECT_THROW(sample_block_mask(g, 1.0, rng), ValidationError);
  EXPECT_THROW(sample_block_mask(g, -0.2, rng), ValidationError);
  EXPECT_THROW(sample_block_mask(g, 0.01, rng), ValidationError);  // below one block
}

TEST(Tokenizer, SwappedExchangesRoles) {
  Rng rng(3);
  const auto m = sample_block_mask({4, 8, 8}, 0.5, rng);
  const auto s = m.swapped();
  EXPECT_EQ(s.mask, m.complement);
  EXPECT_EQ(s.complement, m.mask);
  for (std::size_t i = 0; i < m.spatial.size(); ++i) EXPECT_EQ(s.spatial[i], 1 - m.spatial[i]);
}

TEST(Tokenizer, ApplyMaskReplacesListedRows) {
  const auto tokens = ag::Var::constant({4, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  const auto tok = ag::Var::constant({3}, {-1, -2, -3});
  const std::vector<int> masked{1, 3};
  const auto out = apply_mask(tokens, masked, tok);
  EXPECT_EQ(out.value(), (std::vector<double>{1, 2, 3, -1, -2, -3, 7, 8, 9, -1, -2, -3}));
  const std::vector<int> bad{4};
  EXPECT_THROW(apply_mask(tokens, bad, tok), std::out_of_range);
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

TEST(Tokenizer, MaskedLatentIgnoresMaskedPixels) {
  const auto shape = tiny_shape();
  const Model model(shape, 11);
  Rng rng(12);
  const auto grid = shape.grid();
  const auto m = sample_block_mask(grid, 0.5, rng);
  auto a = random_clip(shape, rng);
  auto b = a;
  // Rewrite every masked cube of b with fresh noise.
  std::vector<double> cubes = a.cubes.value();
  const int width = a.cubes.dim(1);
  for (int idx : m.mask)
    for (int c = 0; c < width; ++c) cubes[static_cast<std::size_t>(idx) * width + c] = rng.uniform();
  b.cubes = ag::Var::constant(a.cubes.shape(), cubes);

  ag::NoGradGuard ng;
  const auto fa = model.masked_latent(a, m.mask).value();
  const auto fb = model.masked_latent(b, m.mask).value();
  ASSERT_EQ(fa.size(), fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(fa[i], fb[i]);

  // The complementary mask sees the rewritten cubes, so it must differ.
  const auto ca = model.masked_latent(a, m.complement).value();
  const auto cb = model.masked_latent(b, m.complement).value();
  double diff = 0;
  for (std::size_t i = 0; i < ca.size(); ++i) diff = std::max(diff, std::abs(ca[i] - cb[i]));
  EXPECT_GT(diff, 1e-9);
}

TEST(Tokenizer, FullyMaskedInputIsConstant) {
  const auto shape = tiny_shape();
  const Model model(shape, 21);
  Rng rng(22);
  std::vector<int> all(static_cast<std::size_t>(shape.grid().tokens()));
  std::iota(all.begin(), all.end(), 0);
  ag::NoGradGuard ng;
  const auto first = model.masked_latent(random_clip(shape, rng), all).value();
  for (int n = 0; n < 3; ++n) {
    const auto other = model.masked_latent(random_clip(shape, rng), all).value();
    for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(first[i], other[i]);
  }
}

}  // namespace
}  // namespace guidex
