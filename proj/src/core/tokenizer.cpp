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

#include "core/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "core/errors.hpp"

namespace guidex {

GridShape grid_for_clip(int T, int H, int W) {
  if (T <= 0 || T % kCubeT != 0) throw ValidationError("clip length must be a positive multiple of 2");
  if (H <= 0 || W <= 0 || H % kCubeS != 0 || W % kCubeS != 0) {
    throw ValidationError("frame size must be a positive multiple of 8, got " + std::to_string(H) + "x" +
                          std::to_string(W));
  }
  return {T / kCubeT, H / kCubeS, W / kCubeS};
}

ag::Var cube_features(std::span<const double> clip, int T, int H, int W, int C) {
  const GridShape g = grid_for_clip(T, H, W);
  if (clip.size() != static_cast<std::size_t>(T) * H * W * C) throw ValidationError("clip size does not match T,H,W,C");
  const int cube = kCubeT * kCubeS * kCubeS * C;
  std::vector<double> out(static_cast<std::size_t>(g.tokens()) * cube);
  std::size_t o = 0;
  for (int i = 0; i < g.t; ++i)
    for (int j = 0; j < g.h; ++j)
      for (int k = 0; k < g.w; ++k)
        for (int dt = 0; dt < kCubeT; ++dt)
          for (int dy = 0; dy < kCubeS; ++dy) {
            const std::size_t base =
                ((static_cast<std::size_t>(i * kCubeT + dt) * H + (j * kCubeS + dy)) * W + k * kCubeS) * C;
            std::copy_n(clip.begin() + static_cast<std::ptrdiff_t>(base), kCubeS * C, out.begin() + static_cast<std::ptrdiff_t>(o));
            o += static_cast<std::size_t>(kCubeS) * C;
          }
  return ag::Var::constant({g.tokens(), cube}, std::move(out));
}

MaskPair MaskPair::swapped() const {
  MaskPair p = *this;
  std::swap(p.mask, p.complement);
  for (auto& s : p.spatial) s = s ? 0 : 1;
  return p;
}

MaskPair sample_block_mask(const GridShape& grid, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("mask ratio must lie in (0, 1)");
  const int h = grid.h, w = grid.w, n = h * w;
  const int target = static_cast<int>(std::ceil(ratio * n - 1e-9));
  if (target < kMinBlockArea) throw ValidationError("mask target smaller than the minimum block area");

  std::vector<std::uint8_t> m(static_cast<std::size_t>(n), 0);
  int count = 0;
  const double log_lo = std::log(kMinAspect), log_hi = std::log(1.0 / kMinAspect);
  int stalls = 0;
  while (count < target && stalls < 10) {
    const int budget = target - count;
    int added = 0;
    for (int attempt = 0; attempt < 10 && added == 0; ++attempt) {
      const double area = rng.uniform(kMinBlockArea, std::max<double>(kMinBlockArea, budget));
      const double aspect = std::exp(rng.uniform(log_lo, log_hi));
      const int bh = static_cast<int>(std::lround(std::sqrt(area * aspect)));
      const int bw = static_cast<int>(std::lround(std::sqrt(area / aspect)));
      if (bh < 1 || bw < 1 || bh > h || bw > w || bh * bw < kMinBlockArea) continue;
      const int top = rng.uniform_int(0, h - bh), left = rng.uniform_int(0, w - bw);
      int fresh = 0;
      for (int y = top; y < top + bh; ++y)
        for (int x = left; x < left + bw; ++x) fresh += m[y * w + x] == 0;
      if (fresh == 0 || fresh > budget) continue;
      for (int y = top; y < top + bh; ++y)
        for (int x = left; x < left + bw; ++x) m[y * w + x] = 1;
      added = fresh;
    }
    count += added;
    stalls = added == 0 ? stalls + 1 : 0;
  }
  // Top up with unmasked cells that border the mask, chosen at random.
  while (count < target) {
    std::vector<int> frontier, rest;
    for (int c = 0; c < n; ++c) {
      if (m[c]) continue;
      const int y = c / w, x = c % w;
      const bool touches = (y > 0 && m[c - w]) || (y + 1 < h && m[c + w]) || (x > 0 && m[c - 1]) ||
                           (x + 1 < w && m[c + 1]);
      (touches ? frontier : rest).push_back(c);
    }
    const auto& pool = frontier.empty() ? rest : frontier;
    m[pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))]] = 1;
    ++count;
  }

  MaskPair pair;
  pair.grid = grid;
  pair.spatial = m;
  for (int i = 0; i < grid.t; ++i)
    for (int c = 0; c < n; ++c) (m[c] ? pair.mask : pair.complement).push_back(i * n + c);
  return pair;
}

ag::Var apply_mask(const ag::Var& tokens, std::span<const int> masked, const ag::Var& mask_token) {
  const int P = tokens.dim(0), D = tokens.dim(1);
  if (static_cast<int>(mask_token.size()) != D) throw std::invalid_argument("apply_mask: mask token width");
  if (masked.empty()) return tokens;
  std::vector<double> keep(static_cast<std::size_t>(P), 1.0), put(static_cast<std::size_t>(P), 0.0);
  for (int i : masked) {
    if (i < 0 || i >= P) throw std::out_of_range("apply_mask: token index " + std::to_string(i));
    keep[i] = 0.0;
    put[i] = 1.0;
  }
  const ag::Var kept = ag::mul_col(tokens, ag::Var::constant({P}, std::move(keep)));
  const ag::Var fill = ag::matmul(ag::Var::constant({P, 1}, std::move(put)), ag::reshape(mask_token, {1, D}));
  return ag::add(kept, fill);
}

}  // namespace guidex
