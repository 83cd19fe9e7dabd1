// Copyright 2026 The Starmesh Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "starmesh/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace starmesh {

namespace {

bool any_requires_grad(const std::vector<Var>& inputs) {
  for (const auto& v : inputs) {
    if (v.defined() && v.requires_grad()) return true;
  }
  return false;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.value().shape() != b.value().shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

class LeafNode final : public Node {
 public:
  LeafNode(std::string name, Tensor value, bool requires_grad)
      : Node(std::move(name), std::move(value), {}, requires_grad) {}
  std::vector<Var> vjp(const Var&, const Var&) const override { return {}; }
};

class OpNode final : public Node {
 public:
  OpNode(std::string name, Tensor value, std::vector<Var> inputs, VjpFn fn)
      : Node(std::move(name), std::move(value), std::move(inputs), false), fn_(std::move(fn)) {
    // requires_grad is decided in make_op via the ctor below.
  }
  OpNode(std::string name, Tensor value, std::vector<Var> inputs, VjpFn fn, bool requires_grad)
      : Node(std::move(name), std::move(value), std::move(inputs), requires_grad),
        fn_(std::move(fn)) {}
  std::vector<Var> vjp(const Var& self, const Var& grad) const override {
    return fn_(self, grad);
  }

 private:
  VjpFn fn_;
};

}  // namespace

Node::Node(std::string name, Tensor value, std::vector<Var> inputs, bool requires_grad)
    : name_(std::move(name)),
      value_(std::move(value)),
      inputs_(std::move(inputs)),
      requires_grad_(requires_grad) {}

Var constant(Tensor t) {
  return Var(std::make_shared<LeafNode>("const", std::move(t), false));
}

Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

Var parameter(Tensor t) {
  return Var(std::make_shared<LeafNode>("param", std::move(t), true));
}

Var make_op(std::string name, Tensor value, std::vector<Var> inputs, VjpFn fn) {
  const bool rg = any_requires_grad(inputs);
  return Var(std::make_shared<OpNode>(std::move(name), std::move(value), std::move(inputs),
                                      std::move(fn), rg));
}

// ---------------------------------------------------------------------------
// Elementwise ops

namespace {

template <typename F>
Tensor map1(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op("add", map2(a.value(), b.value(), [](double x, double y) { return x + y; }),
                 {a, b}, [](const Var&, const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op("sub", map2(a.value(), b.value(), [](double x, double y) { return x - y; }),
                 {a, b},
                 [](const Var&, const Var& g) { return std::vector<Var>{g, neg(g)}; });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make_op("mul", map2(a.value(), b.value(), [](double x, double y) { return x * y; }),
                 {a, b}, [](const Var& self, const Var& g) {
                   const auto& in = self.node()->inputs();
                   return std::vector<Var>{mul(g, in[1]), mul(g, in[0])};
                 });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  return make_op("div", map2(a.value(), b.value(), [](double x, double y) { return x / y; }),
                 {a, b}, [](const Var& self, const Var& g) {
                   const auto& in = self.node()->inputs();
                   // d/da = g/b ; d/db = -g*a/b^2
                   Var ga = div(g, in[1]);
                   Var gb = neg(mul(g, div(in[0], mul(in[1], in[1]))));
                   return std::vector<Var>{ga, gb};
                 });
}

Var neg(const Var& a) {
  return make_op("neg", map1(a.value(), [](double x) { return -x; }), {a},
                 [](const Var&, const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var add_scalar(const Var& a, double s) {
  return make_op("add_scalar", map1(a.value(), [s](double x) { return x + s; }), {a},
                 [](const Var&, const Var& g) { return std::vector<Var>{g}; });
}

Var mul_scalar(const Var& a, double s) {
  return make_op("mul_scalar", map1(a.value(), [s](double x) { return x * s; }), {a},
                 [s](const Var&, const Var& g) { return std::vector<Var>{mul_scalar(g, s)}; });
}

Var square(const Var& a) {
  return make_op("square", map1(a.value(), [](double x) { return x * x; }), {a},
                 [](const Var& self, const Var& g) {
                   const auto& in = self.node()->inputs();
                   return std::vector<Var>{mul_scalar(mul(g, in[0]), 2.0)};
                 });
}

Var sqrt(const Var& a) {
  return make_op("sqrt", map1(a.value(), [](double x) { return std::sqrt(x); }), {a},
                 [](const Var& self, const Var& g) {
                   return std::vector<Var>{mul_scalar(div(g, self), 0.5)};
                 });
}

Var exp(const Var& a) {
  return make_op("exp", map1(a.value(), [](double x) { return std::exp(x); }), {a},
                 [](const Var& self, const Var& g) {
                   return std::vector<Var>{mul(g, self)};
                 });
}

Var log(const Var& a) {
  return make_op("log", map1(a.value(), [](double x) { return std::log(x); }), {a},
                 [](const Var& self, const Var& g) {
                   const auto& in = self.node()->inputs();
                   return std::vector<Var>{div(g, in[0])};
                 });
}

Var sigmoid(const Var& a) {
  return make_op("sigmoid",
                 map1(a.value(), [](double x) { return 1.0 / (1.0 + std::exp(-x)); }), {a},
                 [](const Var& self, const Var& g) {
                   // y' = y (1 - y), expressed on the output so second-order
                   // terms stay correct.
                   Var one_minus = add_scalar(neg(self), 1.0);
                   return std::vector<Var>{mul(g, mul(self, one_minus))};
                 });
}

Var softplus(const Var& a) {
  auto stable = [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); };
  return make_op("softplus", map1(a.value(), stable), {a},
                 [](const Var& self, const Var& g) {
                   const auto& in = self.node()->inputs();
                   return std::vector<Var>{mul(g, sigmoid(in[0]))};
                 });
}

Var leaky_relu(const Var& a, double slope) {
  Tensor mask(a.value().shape());
  for (int64_t i = 0; i < a.size(); ++i) mask[i] = a.value()[i] > 0.0 ? 1.0 : slope;
  Tensor out = map2(a.value(), mask, [](double x, double m) { return x * m; });
  return make_op("leaky_relu", std::move(out), {a},
                 [mask = std::move(mask)](const Var&, const Var& g) {
                   // The mask is piecewise constant; treating it as a constant
                   // is exact almost everywhere.
                   return std::vector<Var>{mul(g, constant(mask))};
                 });
}

Var abs(const Var& a) {
  Tensor sign(a.value().shape());
  for (int64_t i = 0; i < a.size(); ++i) sign[i] = a.value()[i] >= 0.0 ? 1.0 : -1.0;
  return make_op("abs", map1(a.value(), [](double x) { return std::abs(x); }), {a},
                 [sign = std::move(sign)](const Var&, const Var& g) {
                   return std::vector<Var>{mul(g, constant(sign))};
                 });
}

// ---------------------------------------------------------------------------
// Structure

Var reshape(const Var& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw std::invalid_argument("reshape: size mismatch");
  }
  Shape orig = a.shape();
  return make_op("reshape", a.value().reshaped(shape), {a},
                 [orig](const Var&, const Var& g) {
                   return std::vector<Var>{reshape(g, orig)};
                 });
}

Var transpose(const Var& a) {
  return make_op("transpose", transpose2d(a.value()), {a},
                 [](const Var&, const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var slice(const Var& a, int axis, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()) || start < 0 ||
      start + len > s[static_cast<size_t>(axis)]) {
    throw std::invalid_argument("slice: out of range");
  }
  // outer x s[axis] x inner layout.
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
  const int64_t axis_len = s[static_cast<size_t>(axis)];

  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = len;
  Tensor out(out_shape);
  for (int64_t o = 0; o < outer; ++o) {
    const double* src = a.value().data() + (o * axis_len + start) * inner;
    double* dst = out.data() + o * len * inner;
    std::copy(src, src + len * inner, dst);
  }
  Shape in_shape = s;
  return make_op("slice", std::move(out), {a},
                 [axis, start, len, in_shape, outer, inner, axis_len](const Var&, const Var& g) {
                   // Scatter g back into a zero tensor of the input shape.
                   Tensor padded(in_shape);
                   for (int64_t o = 0; o < outer; ++o) {
                     const double* src = g.value().data() + o * len * inner;
                     double* dst = padded.data() + (o * axis_len + start) * inner;
                     std::copy(src, src + len * inner, dst);
                   }
                   // The pad is a linear op with constant pattern; wrapping the
                   // result as an op over g keeps it differentiable: its vjp is
                   // the matching slice.
                   return std::vector<Var>{make_op(
                       "pad_slice", std::move(padded), {g},
                       [axis, start, len](const Var&, const Var& gg) {
                         return std::vector<Var>{slice(gg, axis, start, len)};
                       })};
                 });
}

Var concat0(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat0: empty input");
  Shape tail = parts[0].shape();
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != tail.size())
      throw std::invalid_argument("concat0: rank mismatch");
    for (size_t i = 1; i < tail.size(); ++i) {
      if (p.shape()[i] != tail[i]) throw std::invalid_argument("concat0: trailing dim mismatch");
    }
    total += p.shape()[0];
  }
  Shape out_shape = tail;
  out_shape[0] = total;
  Tensor out(out_shape);
  int64_t offset = 0;
  std::vector<int64_t> lens;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.size(), out.data() + offset);
    offset += p.size();
    lens.push_back(p.shape()[0]);
  }
  return make_op("concat0", std::move(out), parts,
                 [lens](const Var&, const Var& g) {
                   std::vector<Var> grads;
                   int64_t start = 0;
                   for (int64_t len : lens) {
                     grads.push_back(slice(g, 0, start, len));
                     start += len;
                   }
                   return grads;
                 });
}

// The three product flavors close under differentiation without explicit
// transpose copies.
Var matmul(const Var& a, const Var& b) {
  return make_op("matmul", matmul(a.value(), b.value()), {a, b},
                 [](const Var& self, const Var& g) {
                   const auto& in = self.node()->inputs();
                   return std::vector<Var>{matmul_nt(g, in[1]), matmul_tn(in[0], g)};
                 });
}

Var matmul_nt(const Var& a, const Var& b) {
  return make_op("matmul_nt", matmul_nt(a.value(), b.value()), {a, b},
                 [](const Var& self, const Var& g) {
                   const auto& in = self.node()->inputs();
                   return std::vector<Var>{matmul(g, in[1]), matmul_tn(g, in[0])};
                 });
}

Var matmul_tn(const Var& a, const Var& b) {
  return make_op("matmul_tn", matmul_tn(a.value(), b.value()), {a, b},
                 [](const Var& self, const Var& g) {
                   const auto& in = self.node()->inputs();
                   return std::vector<Var>{matmul_nt(in[1], g), matmul(in[0], g)};
                 });
}

Var add_rows(const Var& x, const Var& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 || x.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("add_rows: expected [M,N] and [N]");
  }
  const int64_t m = x.shape()[0], n = x.shape()[1];
  Tensor out = x.value();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out[i * n + j] += b.value()[j];
  }
  return make_op("add_rows", std::move(out), {x, b},
                 [m, n](const Var&, const Var& g) {
                   Var ones_row = constant(Tensor(Shape{1, m}, 1.0));
                   Var gb = reshape(matmul(ones_row, g), Shape{n});
                   return std::vector<Var>{g, gb};
                 });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& a) {
  double s = 0;
  for (int64_t i = 0; i < a.size(); ++i) s += a.value()[i];
  Shape in_shape = a.shape();
  return make_op("sum", Tensor::scalar(s), {a},
                 [in_shape](const Var&, const Var& g) {
                   return std::vector<Var>{expand_scalar(g, in_shape)};
                 });
}

Var mean(const Var& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size())); }

Var expand_scalar(const Var& a, Shape shape) {
  if (a.size() != 1) throw std::invalid_argument("expand_scalar: input must be scalar");
  Tensor out(shape, a.value()[0]);
  return make_op("expand_scalar", std::move(out), {a},
                 [](const Var&, const Var& g) { return std::vector<Var>{sum(g)}; });
}

Var row_sum(const Var& a) {
  if (a.shape().size() != 2) throw std::invalid_argument("row_sum: expected rank-2");
  const int64_t n = a.shape()[1];
  Var ones_col = constant(Tensor(Shape{n, 1}, 1.0));
  return reshape(matmul(a, ones_col), Shape{a.shape()[0]});
}

Var max_all(const Var& a) {
  int64_t argmax = 0;
  double best = a.value()[0];
  for (int64_t i = 1; i < a.size(); ++i) {
    if (a.value()[i] > best) {
      best = a.value()[i];
      argmax = i;
    }
  }
  Shape in_shape = a.shape();
  return make_op("max_all", Tensor::scalar(best), {a},
                 [argmax, in_shape](const Var&, const Var& g) {
                   // Route the gradient to the (first) argmax entry.
                   return std::vector<Var>{make_op(
                       "one_hot_scatter",
                       [&] {
                         Tensor t(in_shape);
                         t[argmax] = g.value()[0];
                         return t;
                       }(),
                       {g},
                       [argmax, in_shape](const Var&, const Var& gg) {
                         Tensor picked = Tensor::scalar(gg.value()[argmax]);
                         return std::vector<Var>{constant(picked)};
                       })};
                 });
}

Var detach(const Var& a) { return constant(a.value()); }

// ---------------------------------------------------------------------------
// LinearMap

LinearMap::LinearMap(Shape in_shape, Shape out_shape)
    : in_shape_(std::move(in_shape)),
      out_shape_(std::move(out_shape)),
      in_size_(shape_size(in_shape_)),
      out_size_(shape_size(out_shape_)) {}

void LinearMap::add_entry(int64_t out_index, int64_t in_index, double weight) {
  if (out_index < 0 || out_index >= out_size_ || in_index < 0 || in_index >= in_size_) {
    throw std::out_of_range("LinearMap::add_entry: index out of range");
  }
  coo_.emplace_back(out_index, static_cast<int64_t>(coo_in_.size()));
  coo_in_.push_back(in_index);
  coo_w_.push_back(weight);
}

void LinearMap::finalize() {
  std::stable_sort(coo_.begin(), coo_.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  offsets_.assign(static_cast<size_t>(out_size_) + 1, 0);
  cols_.resize(coo_.size());
  weights_.resize(coo_.size());
  for (const auto& [row, e] : coo_) offsets_[static_cast<size_t>(row) + 1]++;
  for (int64_t i = 0; i < out_size_; ++i) offsets_[static_cast<size_t>(i) + 1] += offsets_[static_cast<size_t>(i)];
  std::vector<int64_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const auto& [row, e] : coo_) {
    const int64_t slot = cursor[static_cast<size_t>(row)]++;
    cols_[static_cast<size_t>(slot)] = coo_in_[static_cast<size_t>(e)];
    weights_[static_cast<size_t>(slot)] = coo_w_[static_cast<size_t>(e)];
  }
  coo_.clear();
  coo_in_.clear();
  coo_w_.clear();
  finalized_ = true;
}

Tensor LinearMap::apply(const Tensor& in) const {
  if (!finalized_) throw std::logic_error("LinearMap::apply before finalize");
  if (in.size() != in_size_) throw std::invalid_argument("LinearMap::apply: size mismatch");
  Tensor out(out_shape_);
  for (int64_t r = 0; r < out_size_; ++r) {
    double acc = 0;
    for (int64_t e = offsets_[static_cast<size_t>(r)]; e < offsets_[static_cast<size_t>(r) + 1]; ++e) {
      acc += weights_[static_cast<size_t>(e)] * in[cols_[static_cast<size_t>(e)]];
    }
    out[r] = acc;
  }
  return out;
}

Tensor LinearMap::apply_transpose(const Tensor& out) const {
  if (!finalized_) throw std::logic_error("LinearMap::apply_transpose before finalize");
  if (out.size() != out_size_) {
    throw std::invalid_argument("LinearMap::apply_transpose: size mismatch");
  }
  Tensor in(in_shape_);
  for (int64_t r = 0; r < out_size_; ++r) {
    const double o = out[r];
    if (o == 0.0) continue;
    for (int64_t e = offsets_[static_cast<size_t>(r)]; e < offsets_[static_cast<size_t>(r) + 1]; ++e) {
      in[cols_[static_cast<size_t>(e)]] += weights_[static_cast<size_t>(e)] * o;
    }
  }
  return in;
}

Var apply_map(const Var& a, LinearMapPtr map) {
  return make_op("apply_map", map->apply(a.value()), {a},
                 [map](const Var&, const Var& g) {
                   return std::vector<Var>{apply_map_transpose(g, map)};
                 });
}

Var apply_map_transpose(const Var& a, LinearMapPtr map) {
  return make_op("apply_map_t", map->apply_transpose(a.value()), {a},
                 [map](const Var&, const Var& g) {
                   return std::vector<Var>{apply_map(g, map)};
                 });
}

LinearMapPtr make_gather_map(Shape in_shape, Shape out_shape,
                             const std::vector<int64_t>& src_index) {
  auto map = std::make_shared<LinearMap>(std::move(in_shape), std::move(out_shape));
  for (size_t i = 0; i < src_index.size(); ++i) {
    if (src_index[i] >= 0) map->add_entry(static_cast<int64_t>(i), src_index[i], 1.0);
  }
  map->finalize();
  return map;
}

LinearMapPtr make_repeat_cols_map(int64_t n, int64_t k) {
  auto map = std::make_shared<LinearMap>(Shape{n}, Shape{n, k});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < k; ++j) map->add_entry(i * k + j, i, 1.0);
  }
  map->finalize();
  return map;
}

LinearMapPtr make_bilinear_upsample_map(int64_t src_side, int64_t dst_side) {
  auto map = std::make_shared<LinearMap>(Shape{src_side, src_side}, Shape{dst_side, dst_side});
  const double scale = dst_side > 1
                           ? static_cast<double>(src_side - 1) / static_cast<double>(dst_side - 1)
                           : 0.0;
  for (int64_t i = 0; i < dst_side; ++i) {
    for (int64_t j = 0; j < dst_side; ++j) {
      const double u = static_cast<double>(i) * scale;
      const double v = static_cast<double>(j) * scale;
      int64_t i0 = static_cast<int64_t>(std::floor(u));
      int64_t j0 = static_cast<int64_t>(std::floor(v));
      i0 = std::min(i0, src_side - 2 >= 0 ? src_side - 2 : 0);
      j0 = std::min(j0, src_side - 2 >= 0 ? src_side - 2 : 0);
      const double fu = u - static_cast<double>(i0);
      const double fv = v - static_cast<double>(j0);
      const int64_t out = i * dst_side + j;
      const int64_t i1 = std::min(i0 + 1, src_side - 1);
      const int64_t j1 = std::min(j0 + 1, src_side - 1);
      const double w00 = (1 - fu) * (1 - fv);
      const double w01 = (1 - fu) * fv;
      const double w10 = fu * (1 - fv);
      const double w11 = fu * fv;
      if (w00 != 0) map->add_entry(out, i0 * src_side + j0, w00);
      if (w01 != 0) map->add_entry(out, i0 * src_side + j1, w01);
      if (w10 != 0) map->add_entry(out, i1 * src_side + j0, w10);
      if (w11 != 0) map->add_entry(out, i1 * src_side + j1, w11);
    }
  }
  map->finalize();
  return map;
}

LinearMapPtr make_avg_downsample_map(int64_t h, int64_t w, int64_t c, int64_t factor) {
  const int64_t oh = h / factor, ow = w / factor;
  auto map = std::make_shared<LinearMap>(Shape{h, w, c}, Shape{oh, ow, c});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (int64_t i = 0; i < oh; ++i) {
    for (int64_t j = 0; j < ow; ++j) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const int64_t out = (i * ow + j) * c + ch;
        for (int64_t di = 0; di < factor; ++di) {
          for (int64_t dj = 0; dj < factor; ++dj) {
            const int64_t in = ((i * factor + di) * w + (j * factor + dj)) * c + ch;
            map->add_entry(out, in, inv);
          }
        }
      }
    }
  }
  map->finalize();
  return map;
}

// ---------------------------------------------------------------------------
// Backward

Var GradientMap::at(const Var& v) const {
  auto it = grads_.find(v.node());
  if (it == grads_.end()) throw std::out_of_range("GradientMap::at: no gradient recorded");
  return it->second;
}

Tensor GradientMap::tensor_at(const Var& v) const {
  auto it = grads_.find(v.node());
  if (it == grads_.end()) return Tensor(v.shape());
  return it->second.value();
}

GradientMap backward(const Var& root) {
  return backward(root, constant(Tensor(root.shape(), 1.0)));
}

GradientMap backward(const Var& root, const Var& seed) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (seed.shape() != root.shape()) throw std::invalid_argument("backward: seed shape mismatch");

  // Post-order over the requires-grad subgraph (iterative; graphs from
  // training steps are too deep for recursion).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::unordered_map<Node*, NodePtr> keep_alive;
  {
    std::vector<std::pair<NodePtr, size_t>> stack;
    stack.emplace_back(root.node_ptr(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      const auto& ins = node->inputs();
      bool descended = false;
      while (idx < ins.size()) {
        const Var& in = ins[idx++];
        if (in.defined() && in.requires_grad() && !visited.count(in.node())) {
          visited.insert(in.node());
          stack.emplace_back(in.node_ptr(), 0);
          descended = true;
          break;
        }
      }
      if (!descended && idx >= ins.size()) {
        order.push_back(node.get());
        keep_alive.emplace(node.get(), node);
        stack.pop_back();
      }
    }
  }

  GradientMap result;
  std::unordered_map<Node*, Var> acc;
  acc[root.node()] = seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto git = acc.find(node);
    if (git == acc.end()) continue;  // unreachable from the seed
    Var g = git->second;
    result.insert(node, g);
    if (node->inputs().empty()) continue;
    Var self(keep_alive.at(node));
    std::vector<Var> input_grads = node->vjp(self, g);
    const auto& ins = node->inputs();
    if (input_grads.size() != ins.size()) {
      throw std::logic_error("vjp arity mismatch in op " + node->name());
    }
    for (size_t i = 0; i < ins.size(); ++i) {
      const Var& in = ins[i];
      if (!in.defined() || !in.requires_grad() || !input_grads[i].defined()) continue;
      auto ait = acc.find(in.node());
      if (ait == acc.end()) {
        acc[in.node()] = input_grads[i];
      } else {
        ait->second = add(ait->second, input_grads[i]);
      }
    }
  }
  return result;
}

Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         double step) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = f(probe);
    probe[i] = orig - step;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace starmesh
