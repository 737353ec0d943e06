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

#include "core/encoders.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace guidex {

SpaceTimeEncoder::SpaceTimeEncoder(nn::ParamRegistry& reg, const std::string& prefix, const EncoderConfig& cfg,
                                   Rng& rng, bool with_mask_token)
    : cfg_(cfg) {
  if (cfg.dim % cfg.heads != 0) throw ValidationError("model.dim must be divisible by model.heads");
  const int P = cfg.grid.tokens();
  embed_ = nn::Linear(reg, prefix + ".embed", cfg.in_features, cfg.dim, rng);
  pos_ = reg.normal(prefix + ".pos", {P, cfg.dim}, 0.02, rng);
  if (with_mask_token) mask_token_ = reg.normal(prefix + ".mask_token", {cfg.dim}, 0.02, rng);
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    Block b;
    b.ln1 = nn::LayerNorm(reg, p + ".ln1", cfg.dim);
    b.qkv = nn::Linear(reg, p + ".qkv", cfg.dim, 3 * cfg.dim, rng);
    b.proj = nn::Linear(reg, p + ".proj", cfg.dim, cfg.dim, rng);
    b.ln2 = nn::LayerNorm(reg, p + ".ln2", cfg.dim);
    b.fc1 = nn::Linear(reg, p + ".fc1", cfg.dim, cfg.mlp_ratio * cfg.dim, rng);
    b.fc2 = nn::Linear(reg, p + ".fc2", cfg.mlp_ratio * cfg.dim, cfg.dim, rng);
    blocks_.push_back(std::move(b));
  }
  final_ln_ = nn::LayerNorm(reg, prefix + ".final_ln", cfg.dim);
  out_ = nn::Linear(reg, prefix + ".out", cfg.dim, cfg.out_dim, rng);
}

ag::Var SpaceTimeEncoder::attention(const Block& b, const ag::Var& x) const {
  const int D = cfg_.dim, H = cfg_.heads, dh = D / H;
  const ag::Var qkv = b.qkv(x);
  std::vector<ag::Var> heads;
  heads.reserve(H);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < H; ++h) {
    const ag::Var q = ag::slice_cols(qkv, h * dh, dh);
    const ag::Var k = ag::slice_cols(qkv, D + h * dh, dh);
    const ag::Var v = ag::slice_cols(qkv, 2 * D + h * dh, dh);
    const ag::Var att = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), inv));
    heads.push_back(ag::matmul(att, v));
  }
  return b.proj(ag::concat_cols(heads));
}

ag::Var SpaceTimeEncoder::encode(const ag::Var& tokens) const {
  if (tokens.rank() != 2 || tokens.dim(0) != cfg_.grid.tokens() || tokens.dim(1) != cfg_.dim) {
    throw ValidationError("encoder expects tokens [" + std::to_string(cfg_.grid.tokens()) + ", " +
                          std::to_string(cfg_.dim) + "], got " + ag::shape_str(tokens.shape()));
  }
  ag::Var x = ag::add(tokens, pos_);
  for (const Block& b : blocks_) {
    x = ag::add(x, attention(b, b.ln1(x)));
    x = ag::add(x, b.fc2(ag::gelu(b.fc1(b.ln2(x)))));
  }
  return out_(final_ln_(x));
}

Lka3d::Lka3d(nn::ParamRegistry& reg, const std::string& prefix, int kernel, int dil, Rng& rng) : dilation(dil) {
  if (dil < 1 || kernel < 1 || kernel % dil != 0) throw ValidationError("lka kernel must be divisible by the dilation");
  const int kd = kernel / dil, kdense = 2 * dil - 1;
  if (kd % 2 == 0) throw ValidationError("lka kernel / dilation must be odd");
  dwc_kernel = reg.uniform(prefix + ".dwc.kernel", {kd, kd, kd}, 1.0 / std::sqrt(kd * kd * kd), rng);
  dwc_bias = reg.zeros(prefix + ".dwc.bias", {1});
  dwdc_kernel = reg.uniform(prefix + ".dwdc.kernel", {kdense, kdense, kdense},
                            1.0 / std::sqrt(kdense * kdense * kdense), rng);
  dwdc_bias = reg.zeros(prefix + ".dwdc.bias", {1});
  conv_weight = reg.ones(prefix + ".conv.weight", {1});
  conv_bias = reg.zeros(prefix + ".conv.bias", {1});
}

ag::Var Lka3d::operator()(const ag::Var& x) const {
  const ag::Var a = ag::conv3d_same(x, dwc_kernel, dwc_bias, dilation);
  const ag::Var b = ag::conv3d_same(a, dwdc_kernel, dwdc_bias, 1);
  const ag::Shape shape = b.shape();
  const ag::Var flat = ag::reshape(b, {static_cast<int>(b.size()), 1});
  const ag::Var scaled = ag::add_row(ag::mul_row(flat, conv_weight), conv_bias);
  return ag::reshape(scaled, shape);
}

ag::Var LstaBlock::operator()(const ag::Var& e, const GridShape& grid) const {
  const ag::Var f = ag::reshape(ag::row_mean(e), {grid.t, grid.h, grid.w});
  const ag::Var gate = ag::sigmoid(ag::reshape(lka(f), {grid.tokens()}));
  return ag::add(e, ag::mul_col(e, gate));
}

TemporalExpansion::TemporalExpansion(nn::ParamRegistry& reg, const std::string& prefix, int t, int in, int out,
                                     Rng& rng) {
  for (int f = 0; f < 2 * t; ++f) frames.emplace_back(reg, prefix + ".frame" + std::to_string(f), in, out, rng);
}

ag::Var TemporalExpansion::operator()(const ag::Var& x) const {
  if (x.dim(0) * 2 != static_cast<int>(frames.size())) throw ValidationError("temporal expansion: slot count");
  std::vector<ag::Var> rows;
  rows.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) rows.push_back(frames[f](ag::slice_rows(x, static_cast<int>(f / 2), 1)));
  return ag::concat_rows(rows);
}

LstaHead::LstaHead(nn::ParamRegistry& reg, const std::string& prefix, const HeadConfig& cfg, Rng& rng) : cfg_(cfg) {
  for (int i = 0; i < cfg.lsta_blocks; ++i) {
    blocks_.push_back({Lka3d(reg, prefix + ".lsta" + std::to_string(i), cfg.kernel, cfg.dilation, rng)});
  }
  fc1_ = nn::Linear(reg, prefix + ".fc1", cfg.in_dim, cfg.hidden, rng);
  fc2_ = nn::Linear(reg, prefix + ".fc2", cfg.hidden, cfg.out_dim, rng);
  expand_ = TemporalExpansion(reg, prefix + ".expand", cfg.grid.t, cfg.out_dim, cfg.out_dim, rng);
}

ag::Var LstaHead::operator()(const ag::Var& e) const {
  if (e.rank() != 2 || e.dim(0) != cfg_.grid.tokens() || e.dim(1) != cfg_.in_dim) {
    throw ValidationError("head expects [" + std::to_string(cfg_.grid.tokens()) + ", " + std::to_string(cfg_.in_dim) +
                          "], got " + ag::shape_str(e.shape()));
  }
  ag::Var x = e;
  for (const LstaBlock& b : blocks_) x = b(x, cfg_.grid);
  const ag::Var pooled = ag::group_mean_rows(x, cfg_.grid.spatial());
  return expand_(fc2_(ag::gelu(fc1_(pooled))));
}

ProjectionHead::ProjectionHead(nn::ParamRegistry& reg, const std::string& prefix, const GridShape& grid, int in,
                               int hidden, int out, Rng& rng)
    : grid_(grid) {
  fc1_ = nn::Linear(reg, prefix + ".fc1", in, hidden, rng);
  fc2_ = nn::Linear(reg, prefix + ".fc2", hidden, out, rng);
  expand_ = TemporalExpansion(reg, prefix + ".expand", grid.t, out, out, rng);
}

ag::Var ProjectionHead::operator()(const ag::Var& rows) const {
  if (rows.dim(0) != grid_.tokens()) throw ValidationError("projection head: row count");
  const ag::Var h = fc2_(ag::gelu(fc1_(rows)));
  return expand_(ag::group_mean_rows(h, grid_.spatial()));
}

SceneExtractor::SceneExtractor(nn::ParamRegistry& reg, const std::string& prefix, int out, Rng& rng) {
  const int widths[4] = {3, 16, 32, out};
  for (int i = 0; i < 3; ++i) {
    const std::string p = prefix + ".conv" + std::to_string(i);
    const int cin = widths[i], cout = widths[i + 1];
    layers_.push_back({reg.uniform(p + ".weight", {cout, cin, 3, 3}, 1.0 / std::sqrt(cin * 9.0), rng),
                       reg.zeros(p + ".bias", {cout})});
  }
}

ag::Var SceneExtractor::operator()(std::span<const double> image, int H, int W) const {
  if (image.size() != static_cast<std::size_t>(H) * W * 3) throw ValidationError("scene image size mismatch");
  std::vector<double> chw(image.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) chw[(static_cast<std::size_t>(c) * H + y) * W + x] = image[(static_cast<std::size_t>(y) * W + x) * 3 + c];
  ag::Var x = ag::Var::constant({3, H, W}, std::move(chw));
  for (const Conv& l : layers_) x = ag::gelu(ag::conv2d(x, l.weight, l.bias, 2, 1));
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  return ag::reshape(ag::row_mean(ag::reshape(x, {c, hw})), {1, c});
}

}  // namespace guidex
