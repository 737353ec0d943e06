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

#include "core/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace guidex::ag {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const std::vector<double>& v, int rows, int cols) {
  return ConstMap(v.data(), rows, cols);
}
MutMap mmap(std::vector<double>& v, int rows, int cols) {
  return MutMap(v.data(), rows, cols);
}

NodePtr make_node(Shape shape, std::vector<double> value,
                  std::initializer_list<const Var*> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (g_grad_enabled) {
    for (const Var* in : inputs) {
      if (in && in->defined() && in->requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
    // Backward closures also read constant inputs, so keep them alive.
    if (n->requires_grad) {
      for (const Var* in : inputs) {
        if (in && in->defined()) n->parents.push_back(in->ptr());
      }
    }
  }
  return n;
}

NodePtr make_node_span(Shape shape, std::vector<double> value, std::span<const Var> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (g_grad_enabled) {
    for (const Var& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
    if (n->requires_grad) {
      for (const Var& in : inputs) n->parents.push_back(in.ptr());
    }
  }
  return n;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  std::ostringstream os;
  os << op << ": shape mismatch " << shape_str(a) << " vs " << shape_str(b);
  throw std::invalid_argument(os.str());
}

void require_rank2(const char* op, const Var& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                shape_str(a.shape()));
  }
}

bool wants(const Node* n) { return n && n->requires_grad; }

template <class F>
Var unary(const Var& a, F&& f) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return Var(make_node(a.shape(), std::move(out), {&a}));
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Var Var::constant(Shape shape, std::vector<double> value) {
  if (numel(shape) != value.size()) {
    throw std::invalid_argument("constant: value size does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::zeros(Shape shape) {
  const std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Var Var::full(Shape shape, double v) {
  const std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, v));
}

Var Var::parameter(Shape shape, std::vector<double> value) {
  Var v = constant(std::move(shape), std::move(value));
  v.node_->requires_grad = true;
  return v;
}

int Var::dim(int i) const {
  if (i < 0) i += rank();
  return node_->shape.at(static_cast<std::size_t>(i));
}

double Var::item() const {
  if (size() != 1) throw std::logic_error("item() on non-scalar " + shape_str(shape()));
  return node_->value[0];
}

void Var::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

void Var::backward() const {
  if (size() != 1) throw std::logic_error("backward() requires a scalar output");
  if (!node_->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var detach(const Var& a) { return Var::constant(a.shape(), a.value()); }

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  auto n = make_node(a.shape(), std::move(out), {&a, &b});
  if (n->requires_grad) {
    Node *o = n.get(), *pa = a.node(), *pb = b.node();
    n->backward_fn = [o, pa, pb] {
      for (Node* p : {pa, pb}) {
        if (!wants(p)) continue;
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
    };
  }
  return Var(n);
}

Var sub(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  auto n = make_node(a.shape(), std::move(out), {&a, &b});
  if (n->requires_grad) {
    Node *o = n.get(), *pa = a.node(), *pb = b.node();
    n->backward_fn = [o, pa, pb] {
      if (wants(pa)) {
        auto& g = pa->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (wants(pb)) {
        auto& g = pb->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
      }
    };
  }
  return Var(n);
}

Var mul(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  auto n = make_node(a.shape(), std::move(out), {&a, &b});
  if (n->requires_grad) {
    Node *o = n.get(), *pa = a.node(), *pb = b.node();
    n->backward_fn = [o, pa, pb] {
      if (wants(pa)) {
        auto& g = pa->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * pb->value[i];
      }
      if (wants(pb)) {
        auto& g = pb->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * pa->value[i];
      }
    };
  }
  return Var(n);
}

Var scale(const Var& a, double s) {
  auto out = unary(a, [s](double x) { return s * x; });
  if (out.requires_grad()) {
    Node *o = out.node(), *pa = a.node();
    o->backward_fn = [o, pa, s] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * o->grad[i];
    };
  }
  return out;
}

Var add_scalar(const Var& a, double s) {
  auto out = unary(a, [s](double x) { return x + s; });
  if (out.requires_grad()) {
    Node *o = out.node(), *pa = a.node();
    o->backward_fn = [o, pa] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  }
  return out;
}

Var add_row(const Var& a, const Var& b) {
  require_rank2("add_row", a);
  const int m = a.dim(0), n = a.dim(1);
  if (static_cast<int>(b.size()) != n) shape_error("add_row", a.shape(), b.shape());
  std::vector<double> out(a.value());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] += b.at(j);
  auto node = make_node(a.shape(), std::move(out), {&a, &b});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node(), *pb = b.node();
    node->backward_fn = [o, pa, pb, m, n] {
      if (wants(pa)) {
        auto& g = pa->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (wants(pb)) {
        auto& g = pb->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) g[j] += o->grad[i * n + j];
      }
    };
  }
  return Var(node);
}

Var mul_row(const Var& a, const Var& b) {
  require_rank2("mul_row", a);
  const int m = a.dim(0), n = a.dim(1);
  if (static_cast<int>(b.size()) != n) shape_error("mul_row", a.shape(), b.shape());
  std::vector<double> out(a.value());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] *= b.at(j);
  auto node = make_node(a.shape(), std::move(out), {&a, &b});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node(), *pb = b.node();
    node->backward_fn = [o, pa, pb, m, n] {
      if (wants(pa)) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) g[i * n + j] += o->grad[i * n + j] * pb->value[j];
      }
      if (wants(pb)) {
        auto& g = pb->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) g[j] += o->grad[i * n + j] * pa->value[i * n + j];
      }
    };
  }
  return Var(node);
}

Var mul_col(const Var& a, const Var& c) {
  require_rank2("mul_col", a);
  const int m = a.dim(0), n = a.dim(1);
  if (static_cast<int>(c.size()) != m) shape_error("mul_col", a.shape(), c.shape());
  std::vector<double> out(a.value());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] *= c.at(i);
  auto node = make_node(a.shape(), std::move(out), {&a, &c});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node(), *pc = c.node();
    node->backward_fn = [o, pa, pc, m, n] {
      if (wants(pa)) {
        auto& g = pa->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) g[i * n + j] += o->grad[i * n + j] * pc->value[i];
      }
      if (wants(pc)) {
        auto& g = pc->ensure_grad();
        for (int i = 0; i < m; ++i) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += o->grad[i * n + j] * pa->value[i * n + j];
          g[i] += s;
        }
      }
    };
  }
  return Var(node);
}

Var matmul(const Var& a, const Var& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", a.shape(), b.shape());
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  mmap(out, m, n).noalias() = cmap(a.value(), m, k) * cmap(b.value(), k, n);
  auto node = make_node({m, n}, std::move(out), {&a, &b});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node(), *pb = b.node();
    node->backward_fn = [o, pa, pb, m, k, n] {
      auto go = cmap(o->grad, m, n);
      if (wants(pa)) mmap(pa->ensure_grad(), m, k).noalias() += go * cmap(pb->value, k, n).transpose();
      if (wants(pb)) mmap(pb->ensure_grad(), k, n).noalias() += cmap(pa->value, m, k).transpose() * go;
    };
  }
  return Var(node);
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) shape_error("matmul_nt", a.shape(), b.shape());
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  mmap(out, m, n).noalias() = cmap(a.value(), m, k) * cmap(b.value(), n, k).transpose();
  auto node = make_node({m, n}, std::move(out), {&a, &b});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node(), *pb = b.node();
    node->backward_fn = [o, pa, pb, m, k, n] {
      auto go = cmap(o->grad, m, n);
      if (wants(pa)) mmap(pa->ensure_grad(), m, k).noalias() += go * cmap(pb->value, n, k);
      if (wants(pb)) mmap(pb->ensure_grad(), n, k).noalias() += go.transpose() * cmap(pa->value, m, k);
    };
  }
  return Var(node);
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank2("linear", x);
  require_rank2("linear", w);
  const int m = x.dim(0), in = x.dim(1), outd = w.dim(0);
  if (w.dim(1) != in) shape_error("linear", x.shape(), w.shape());
  if (b.defined() && static_cast<int>(b.size()) != outd) shape_error("linear bias", w.shape(), b.shape());
  std::vector<double> out(static_cast<std::size_t>(m) * outd);
  auto om = mmap(out, m, outd);
  om.noalias() = cmap(x.value(), m, in) * cmap(w.value(), outd, in).transpose();
  if (b.defined()) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < outd; ++j) om(i, j) += b.at(j);
  }
  auto node = make_node({m, outd}, std::move(out), {&x, &w, b.defined() ? &b : nullptr});
  if (node->requires_grad) {
    Node *o = node.get(), *px = x.node(), *pw = w.node();
    Node* pb = b.defined() ? b.node() : nullptr;
    node->backward_fn = [o, px, pw, pb, m, in, outd] {
      auto go = cmap(o->grad, m, outd);
      if (wants(px)) mmap(px->ensure_grad(), m, in).noalias() += go * cmap(pw->value, outd, in);
      if (wants(pw)) mmap(pw->ensure_grad(), outd, in).noalias() += go.transpose() * cmap(px->value, m, in);
      if (wants(pb)) {
        auto& g = pb->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < outd; ++j) g[j] += o->grad[i * outd + j];
      }
    };
  }
  return Var(node);
}

Var transpose(const Var& a) {
  require_rank2("transpose", a);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  mmap(out, n, m) = cmap(a.value(), m, n).transpose();
  auto node = make_node({n, m}, std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa, m, n] {
      mmap(pa->ensure_grad(), m, n) += cmap(o->grad, n, m).transpose();
    };
  }
  return Var(node);
}

Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  auto node = make_node(std::move(shape), a.value(), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  }
  return Var(node);
}

namespace {

// Elementwise op whose derivative depends on input x and output y.
template <class F, class D>
Var elementwise(const Var& a, F&& f, D&& df) {
  auto out = unary(a, f);
  if (out.requires_grad()) {
    Node *o = out.node(), *pa = a.node();
    o->backward_fn = [o, pa, df] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * df(pa->value[i], o->value[i]);
    };
  }
  return out;
}

}  // namespace

Var relu(const Var& a) {
  return elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return elementwise(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Var tanh(const Var& a) {
  return elementwise(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return elementwise(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return elementwise(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(const Var& a) {
  return elementwise(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(const Var& a, double eps) {
  return elementwise(
      a, [eps](double x) { return std::sqrt(x + eps); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  auto node = make_node({1}, {s}, {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa] {
      auto& g = pa->ensure_grad();
      for (double& x : g) x += o->grad[0];
    };
  }
  return Var(node);
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var row_sum(const Var& a) {
  require_rank2("row_sum", a);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[i] += a.at(static_cast<std::size_t>(i) * n + j);
  auto node = make_node({m}, std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa, m, n] {
      auto& g = pa->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g[i * n + j] += o->grad[i];
    };
  }
  return Var(node);
}

Var row_mean(const Var& a) { return scale(row_sum(a), 1.0 / static_cast<double>(a.dim(1))); }

Var col_mean(const Var& a) {
  require_rank2("col_mean", a);
  return reshape(group_mean_rows(a, a.dim(0)), {a.dim(1)});
}

Var group_mean_rows(const Var& a, int group) {
  require_rank2("group_mean_rows", a);
  const int m = a.dim(0), n = a.dim(1);
  if (group <= 0 || m % group != 0) {
    throw std::invalid_argument("group_mean_rows: rows not divisible by group");
  }
  const int groups = m / group;
  const double inv = 1.0 / group;
  std::vector<double> out(static_cast<std::size_t>(groups) * n, 0.0);
  for (int r = 0; r < m; ++r)
    for (int j = 0; j < n; ++j) out[(r / group) * n + j] += inv * a.at(static_cast<std::size_t>(r) * n + j);
  auto node = make_node({groups, n}, std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa, m, n, group, inv] {
      auto& g = pa->ensure_grad();
      for (int r = 0; r < m; ++r)
        for (int j = 0; j < n; ++j) g[r * n + j] += inv * o->grad[(r / group) * n + j];
    };
  }
  return Var(node);
}

Var row_norm(const Var& a, double eps) {
  require_rank2("row_norm", a);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m);
  for (int i = 0; i < m; ++i) {
    double s = eps;
    for (int j = 0; j < n; ++j) {
      const double v = a.at(static_cast<std::size_t>(i) * n + j);
      s += v * v;
    }
    out[i] = std::sqrt(s);
  }
  auto node = make_node({m}, std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa, m, n] {
      auto& g = pa->ensure_grad();
      for (int i = 0; i < m; ++i) {
        if (o->value[i] <= 0.0) continue;
        const double f = o->grad[i] / o->value[i];
        for (int j = 0; j < n; ++j) g[i * n + j] += f * pa->value[i * n + j];
      }
    };
  }
  return Var(node);
}

Var normalize_rows(const Var& a, double tiny) {
  require_rank2("normalize_rows", a);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> norms(m);
  std::vector<double> out(a.size(), 0.0);
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      const double v = a.at(static_cast<std::size_t>(i) * n + j);
      s += v * v;
    }
    norms[i] = std::sqrt(s);
    if (norms[i] < tiny) continue;
    for (int j = 0; j < n; ++j) out[i * n + j] = a.at(static_cast<std::size_t>(i) * n + j) / norms[i];
  }
  auto node = make_node(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa, m, n, norms = std::move(norms), tiny] {
      auto& g = pa->ensure_grad();
      for (int i = 0; i < m; ++i) {
        if (norms[i] < tiny) continue;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += o->grad[i * n + j] * o->value[i * n + j];
        for (int j = 0; j < n; ++j) {
          g[i * n + j] += (o->grad[i * n + j] - o->value[i * n + j] * dot) / norms[i];
        }
      }
    };
  }
  return Var(node);
}

Var softmax_rows(const Var& a) {
  require_rank2("softmax_rows", a);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i) {
    const double* row = a.value().data() + static_cast<std::size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    for (int j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  auto node = make_node(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa, m, n] {
      auto& g = pa->ensure_grad();
      for (int i = 0; i < m; ++i) {
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += o->grad[i * n + j] * o->value[i * n + j];
        for (int j = 0; j < n; ++j) g[i * n + j] += o->value[i * n + j] * (o->grad[i * n + j] - dot);
      }
    };
  }
  return Var(node);
}

Var layernorm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  require_rank2("layernorm_rows", a);
  const int m = a.dim(0), n = a.dim(1);
  if (static_cast<int>(gain.size()) != n || static_cast<int>(bias.size()) != n) {
    shape_error("layernorm_rows", a.shape(), gain.shape());
  }
  std::vector<double> xhat(a.size());
  std::vector<double> inv_std(m);
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i) {
    const double* row = a.value().data() + static_cast<std::size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gain.at(j) + bias.at(j);
    }
  }
  auto node = make_node(a.shape(), std::move(out), {&a, &gain, &bias});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node(), *pg = gain.node(), *pb = bias.node();
    node->backward_fn = [o, pa, pg, pb, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      if (wants(pg) || wants(pb)) {
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) {
            if (wants(pg)) pg->ensure_grad()[j] += o->grad[i * n + j] * xhat[i * n + j];
            if (wants(pb)) pb->ensure_grad()[j] += o->grad[i * n + j];
          }
        }
      }
      if (wants(pa)) {
        auto& g = pa->ensure_grad();
        std::vector<double> dxhat(n);
        for (int i = 0; i < m; ++i) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (int j = 0; j < n; ++j) {
            dxhat[j] = o->grad[i * n + j] * pg->value[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[i * n + j];
          }
          mean_d /= n;
          mean_dx /= n;
          for (int j = 0; j < n; ++j) {
            g[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
          }
        }
      }
    };
  }
  return Var(node);
}

Var slice_rows(const Var& a, int start, int count) {
  require_rank2("slice_rows", a);
  const int m = a.dim(0), n = a.dim(1);
  if (start < 0 || count < 0 || start + count > m) throw std::out_of_range("slice_rows: range");
  std::vector<double> out(a.value().begin() + static_cast<std::ptrdiff_t>(start) * n,
                          a.value().begin() + static_cast<std::ptrdiff_t>(start + count) * n);
  auto node = make_node({count, n}, std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa, start, n] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < o->grad.size(); ++i) g[static_cast<std::size_t>(start) * n + i] += o->grad[i];
    };
  }
  return Var(node);
}

Var slice_cols(const Var& a, int start, int count) {
  require_rank2("slice_cols", a);
  const int m = a.dim(0), n = a.dim(1);
  if (start < 0 || count < 0 || start + count > n) throw std::out_of_range("slice_cols: range");
  std::vector<double> out(static_cast<std::size_t>(m) * count);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < count; ++j) out[i * count + j] = a.at(static_cast<std::size_t>(i) * n + start + j);
  auto node = make_node({m, count}, std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa, m, n, start, count] {
      auto& g = pa->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < count; ++j) g[i * n + start + j] += o->grad[i * count + j];
    };
  }
  return Var(node);
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const int n = parts[0].dim(1);
  int m = 0;
  for (const Var& p : parts) {
    require_rank2("concat_rows", p);
    if (p.dim(1) != n) shape_error("concat_rows", parts[0].shape(), p.shape());
    m += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m) * n);
  for (const Var& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
  auto node = make_node_span({m, n}, std::move(out), parts);
  if (node->requires_grad) {
    Node* o = node.get();
    std::vector<Node*> ps;
    for (const Var& p : parts) ps.push_back(p.node());
    node->backward_fn = [o, ps] {
      std::size_t off = 0;
      for (Node* p : ps) {
        if (wants(p)) {
          auto& g = p->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[off + i];
        }
        off += p->value.size();
      }
    };
  }
  return Var(node);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int m = parts[0].dim(0);
  int n = 0;
  for (const Var& p : parts) {
    require_rank2("concat_cols", p);
    if (p.dim(0) != m) shape_error("concat_cols", parts[0].shape(), p.shape());
    n += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  int c0 = 0;
  for (const Var& p : parts) {
    const int pn = p.dim(1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < pn; ++j) out[i * n + c0 + j] = p.at(static_cast<std::size_t>(i) * pn + j);
    c0 += pn;
  }
  auto node = make_node_span({m, n}, std::move(out), parts);
  if (node->requires_grad) {
    Node* o = node.get();
    std::vector<Node*> ps;
    for (const Var& p : parts) ps.push_back(p.node());
    node->backward_fn = [o, ps, m, n] {
      int col = 0;
      for (Node* p : ps) {
        const int pn = p->shape[1];
        if (wants(p)) {
          auto& g = p->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < pn; ++j) g[i * pn + j] += o->grad[i * n + col + j];
        }
        col += pn;
      }
    };
  }
  return Var(node);
}

Var gather_rows(const Var& a, std::span<const int> index) {
  require_rank2("gather_rows", a);
  const int m = a.dim(0), n = a.dim(1);
  const int k = static_cast<int>(index.size());
  std::vector<double> out(static_cast<std::size_t>(k) * n);
  for (int i = 0; i < k; ++i) {
    if (index[i] < 0 || index[i] >= m) throw std::out_of_range("gather_rows: index");
    std::copy_n(a.value().begin() + static_cast<std::ptrdiff_t>(index[i]) * n, n, out.begin() + i * n);
  }
  auto node = make_node({k, n}, std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    std::vector<int> idx(index.begin(), index.end());
    node->backward_fn = [o, pa, idx = std::move(idx), n] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < n; ++j) g[idx[i] * n + j] += o->grad[i * n + j];
    };
  }
  return Var(node);
}

Var gather_cols(const Var& a, std::span<const int> index) {
  require_rank2("gather_cols", a);
  const int m = a.dim(0), n = a.dim(1);
  const int k = static_cast<int>(index.size());
  std::vector<double> out(static_cast<std::size_t>(m) * k);
  for (int j = 0; j < k; ++j)
    if (index[j] < 0 || index[j] >= n) throw std::out_of_range("gather_cols: index");
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) out[i * k + j] = a.at(static_cast<std::size_t>(i) * n + index[j]);
  auto node = make_node({m, k}, std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    std::vector<int> idx(index.begin(), index.end());
    node->backward_fn = [o, pa, idx = std::move(idx), m, n, k] {
      auto& g = pa->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) g[i * n + idx[j]] += o->grad[i * k + j];
    };
  }
  return Var(node);
}

Var scatter_cols(const Var& a, std::span<const int> index, int cols) {
  require_rank2("scatter_cols", a);
  const int m = a.dim(0), k = a.dim(1);
  if (static_cast<int>(index.size()) != k) throw std::invalid_argument("scatter_cols: index size");
  std::vector<double> out(static_cast<std::size_t>(m) * cols, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) out[i * cols + index[j]] += a.at(static_cast<std::size_t>(i) * k + j);
  auto node = make_node({m, cols}, std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    std::vector<int> idx(index.begin(), index.end());
    node->backward_fn = [o, pa, idx = std::move(idx), m, k, cols] {
      auto& g = pa->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) g[i * k + j] += o->grad[i * cols + idx[j]];
    };
  }
  return Var(node);
}

Var shift_rows(const Var& a, int shift, int block) {
  require_rank2("shift_rows", a);
  const int m = a.dim(0), n = a.dim(1);
  const int off = shift * block;
  std::vector<double> out(a.size(), 0.0);
  for (int r = 0; r < m; ++r) {
    const int src = r - off;
    if (src < 0 || src >= m) continue;
    std::copy_n(a.value().begin() + static_cast<std::ptrdiff_t>(src) * n, n, out.begin() + r * n);
  }
  auto node = make_node(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    Node *o = node.get(), *pa = a.node();
    node->backward_fn = [o, pa, m, n, off] {
      auto& g = pa->ensure_grad();
      for (int r = 0; r < m; ++r) {
        const int src = r - off;
        if (src < 0 || src >= m) continue;
        for (int j = 0; j < n; ++j) g[src * n + j] += o->grad[r * n + j];
      }
    };
  }
  return Var(node);
}

Var graph_mix(const Var& x, std::span<const double> adj, int vertices) {
  require_rank2("graph_mix", x);
  const int rows = x.dim(0), c = x.dim(1), v = vertices;
  if (rows % v != 0 || adj.size() != static_cast<std::size_t>(v) * v) {
    throw std::invalid_argument("graph_mix: layout");
  }
  const int steps = rows / v;
  std::vector<double> a(adj.begin(), adj.end());
  std::vector<double> out(x.size());
  for (int t = 0; t < steps; ++t) {
    mmap(out, rows, c).middleRows(t * v, v).noalias() =
        cmap(a, v, v) * cmap(x.value(), rows, c).middleRows(t * v, v);
  }
  auto node = make_node(x.shape(), std::move(out), {&x});
  if (node->requires_grad) {
    Node *o = node.get(), *px = x.node();
    node->backward_fn = [o, px, a = std::move(a), rows, c, v, steps] {
      auto g = mmap(px->ensure_grad(), rows, c);
      for (int t = 0; t < steps; ++t) {
        g.middleRows(t * v, v).noalias() += cmap(a, v, v).transpose() * cmap(o->grad, rows, c).middleRows(t * v, v);
      }
    };
  }
  return Var(node);
}

Var conv3d_same(const Var& x, const Var& kernel, const Var& bias, int dilation) {
  if (x.rank() != 3 || kernel.rank() != 3) throw std::invalid_argument("conv3d_same: expects rank-3 tensors");
  const int T = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int k = kernel.dim(0);
  if (kernel.dim(1) != k || kernel.dim(2) != k || k % 2 == 0) {
    throw std::invalid_argument("conv3d_same: kernel must be an odd cube");
  }
  if (dilation < 1) throw std::invalid_argument("conv3d_same: dilation must be >= 1");
  if (bias.defined() && bias.size() != 1) throw std::invalid_argument("conv3d_same: scalar bias expected");
  const int r = (k - 1) / 2;
  const double b0 = bias.defined() ? bias.at(0) : 0.0;
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  std::vector<double> out(x.size(), b0);
  auto xi = [H, W](int t, int h, int w) { return (static_cast<std::size_t>(t) * H + h) * W + w; };
  for (int t = 0; t < T; ++t)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        double s = 0.0;
        for (int a = 0; a < k; ++a) {
          const int tt = t + dilation * (a - r);
          if (tt < 0 || tt >= T) continue;
          for (int b = 0; b < k; ++b) {
            const int hh = h + dilation * (b - r);
            if (hh < 0 || hh >= H) continue;
            for (int c = 0; c < k; ++c) {
              const int ww = w + dilation * (c - r);
              if (ww < 0 || ww >= W) continue;
              s += kv[(a * k + b) * k + c] * xv[xi(tt, hh, ww)];
            }
          }
        }
        out[xi(t, h, w)] += s;
      }
  auto node = make_node(x.shape(), std::move(out), {&x, &kernel, bias.defined() ? &bias : nullptr});
  if (node->requires_grad) {
    Node *o = node.get(), *px = x.node(), *pk = kernel.node();
    Node* pb = bias.defined() ? bias.node() : nullptr;
    node->backward_fn = [o, px, pk, pb, T, H, W, k, r, dilation, xi] {
      const bool gx = wants(px), gk = wants(pk);
      std::vector<double>* dx = gx ? &px->ensure_grad() : nullptr;
      std::vector<double>* dk = gk ? &pk->ensure_grad() : nullptr;
      double db = 0.0;
      for (int t = 0; t < T; ++t)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const double go = o->grad[xi(t, h, w)];
            db += go;
            if (go == 0.0) continue;
            for (int a = 0; a < k; ++a) {
              const int tt = t + dilation * (a - r);
              if (tt < 0 || tt >= T) continue;
              for (int b = 0; b < k; ++b) {
                const int hh = h + dilation * (b - r);
                if (hh < 0 || hh >= H) continue;
                for (int c = 0; c < k; ++c) {
                  const int ww = w + dilation * (c - r);
                  if (ww < 0 || ww >= W) continue;
                  const int ki = (a * k + b) * k + c;
                  if (gx) (*dx)[xi(tt, hh, ww)] += pk->value[ki] * go;
                  if (gk) (*dk)[ki] += px->value[xi(tt, hh, ww)] * go;
                }
              }
            }
          }
      if (wants(pb)) pb->ensure_grad()[0] += db;
    };
  }
  return Var(node);
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  if (x.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: expects x[c,h,w], w[o,c,k,k]");
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != k) shape_error("conv2d", x.shape(), w.shape());
  if (b.defined() && static_cast<int>(b.size()) != cout) shape_error("conv2d bias", w.shape(), b.shape());
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  const int K = cin * k * k;
  const int L = Ho * Wo;
  // im2col: [K, L]
  std::vector<double> cols(static_cast<std::size_t>(K) * L, 0.0);
  for (int c = 0; c < cin; ++c)
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        const int row = (c * k + i) * k + j;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + i;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + j;
            if (ix < 0 || ix >= W) continue;
            cols[static_cast<std::size_t>(row) * L + oy * Wo + ox] =
                x.at((static_cast<std::size_t>(c) * H + iy) * W + ix);
          }
        }
      }
  std::vector<double> out(static_cast<std::size_t>(cout) * L);
  auto om = mmap(out, cout, L);
  om.noalias() = cmap(w.value(), cout, K) * cmap(cols, K, L);
  if (b.defined()) {
    for (int o = 0; o < cout; ++o) om.row(o).array() += b.at(o);
  }
  auto node = make_node({cout, Ho, Wo}, std::move(out), {&x, &w, b.defined() ? &b : nullptr});
  if (node->requires_grad) {
    Node *o = node.get(), *px = x.node(), *pw = w.node();
    Node* pb = b.defined() ? b.node() : nullptr;
    node->backward_fn = [o, px, pw, pb, cols = std::move(cols), cin, H, W, cout, k, stride, pad, Ho,
                         Wo, K, L] {
      auto go = cmap(o->grad, cout, L);
      if (wants(pw)) mmap(pw->ensure_grad(), cout, K).noalias() += go * cmap(cols, K, L).transpose();
      if (wants(pb)) {
        auto& g = pb->ensure_grad();
        for (int c = 0; c < cout; ++c) g[c] += go.row(c).sum();
      }
      if (wants(px)) {
        std::vector<double> dcols(static_cast<std::size_t>(K) * L);
        mmap(dcols, K, L).noalias() = cmap(pw->value, cout, K).transpose() * go;
        auto& g = px->ensure_grad();
        for (int c = 0; c < cin; ++c)
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              const int row = (c * k + i) * k + j;
              for (int oy = 0; oy < Ho; ++oy) {
                const int iy = oy * stride - pad + i;
                if (iy < 0 || iy >= H) continue;
                for (int ox = 0; ox < Wo; ++ox) {
                  const int ix = ox * stride - pad + j;
                  if (ix < 0 || ix >= W) continue;
                  g[(static_cast<std::size_t>(c) * H + iy) * W + ix] +=
                      dcols[static_cast<std::size_t>(row) * L + oy * Wo + ox];
                }
              }
            }
      }
    };
  }
  return Var(node);
}

Var dot_rows(const Var& a, const Var& b) { return row_sum(mul(a, b)); }

}  // namespace guidex::ag
