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

// Minimal reverse-mode automatic differentiation over dense row-major
// double tensors. Every op records its parents and a backward closure when
// gradient recording is enabled and at least one input requires a gradient.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace guidex::ag {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  std::vector<double> value;
  std::vector<double> grad;
  Shape shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  std::size_t size() const { return value.size(); }
  std::vector<double>& ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<double> value);
  static Var zeros(Shape shape);
  static Var full(Shape shape, double v);
  // Leaf that accumulates gradients across backward passes.
  static Var parameter(Shape shape, std::vector<double> value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->value.size(); }

  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& mutable_value() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad() { return node_->ensure_grad(); }
  double item() const;
  double at(std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Node* node() const { return node_.get(); }
  const NodePtr& ptr() const { return node_; }

  void zero_grad();
  // Seeds d(self)/d(self) = 1; self must be a scalar.
  void backward() const;

 private:
  NodePtr node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Copy of the value with no history.
Var detach(const Var& a);

// Elementwise, same shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// Broadcasts over the rows of a [m, n] matrix: b has n entries.
Var add_row(const Var& a, const Var& b);
Var mul_row(const Var& a, const Var& b);
// Scales row i of a [m, n] matrix by c[i].
Var mul_col(const Var& a, const Var& c);

Var matmul(const Var& a, const Var& b);     // [m,k] x [k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k] x [n,k]^T
// x [m,in], w [out,in], b [out] (b may be undefined).
Var linear(const Var& x, const Var& w, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

Var relu(const Var& a);
Var gelu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);
// sqrt(a + eps) elementwise.
Var sqrt(const Var& a, double eps = 0.0);

Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);   // [m,n] -> [m]
Var row_mean(const Var& a);  // [m,n] -> [m]
Var col_mean(const Var& a);  // [m,n] -> [n]
// Mean over consecutive groups of `group` rows: [g*group, n] -> [g, n].
Var group_mean_rows(const Var& a, int group);
// Euclidean norm of each row, sqrt(sum sq + eps).
Var row_norm(const Var& a, double eps = 0.0);
// Divides each row by its norm; rows with norm below `tiny` map to zero.
Var normalize_rows(const Var& a, double tiny = 1e-12);

Var softmax_rows(const Var& a);
Var layernorm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);

Var slice_rows(const Var& a, int start, int count);
Var slice_cols(const Var& a, int start, int count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(const Var& a, std::span<const int> index);
Var gather_cols(const Var& a, std::span<const int> index);
// Inverse placement of gather_cols: output has `cols` columns, column
// index[j] receives input column j, other columns are zero.
Var scatter_cols(const Var& a, std::span<const int> index, int cols);

// Row r of the output equals row (r - shift*block) of the input, zero
// outside the range. Used for zero-padded temporal shifts.
Var shift_rows(const Var& a, int shift, int block);

// For x laid out [T*V, C], applies the V x V matrix `adj` within every time
// step: out_t = adj * x_t. adj is a constant.
Var graph_mix(const Var& x, std::span<const double> adj, int vertices);

// Single-channel 3-D convolution with cubic kernel [k,k,k], scalar bias and
// dilation, same padding. x is [t,h,w].
Var conv3d_same(const Var& x, const Var& kernel, const Var& bias, int dilation);

// Multi-channel 2-D convolution. x [cin,h,w], w [cout,cin,k,k], b [cout].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// Scalar-valued convenience.
Var dot_rows(const Var& a, const Var& b);  // [m,n],[m,n] -> [m]

}  // namespace guidex::ag
