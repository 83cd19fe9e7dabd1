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

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "starmesh/tensor.hpp"

namespace starmesh {

class Var;

// Eager reverse-mode autodiff over Tensor. Values are computed at
// construction; vjp() builds its result out of further Vars, so gradients are
// themselves differentiable (required by the gradient-penalty term, whose
// parameter gradient differentiates through a first backward pass).
class Node {
 public:
  Node(std::string name, Tensor value, std::vector<Var> inputs, bool requires_grad);
  virtual ~Node() = default;

  const Tensor& value() const { return value_; }
  Tensor& mutable_value() { return value_; }
  bool requires_grad() const { return requires_grad_; }
  const std::vector<Var>& inputs() const { return inputs_; }
  const std::string& name() const { return name_; }

  // Gradients w.r.t. each input, given the gradient w.r.t. this node.
  // `self` wraps this node so vjps may reuse the forward value symbolically.
  // A default-constructed Var in the result means "no gradient".
  virtual std::vector<Var> vjp(const Var& self, const Var& grad) const = 0;

 private:
  std::string name_;
  Tensor value_;
  std::vector<Var> inputs_;
  bool requires_grad_;
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value(); }
  const Shape& shape() const { return node_->value().shape(); }
  int64_t size() const { return node_->value().size(); }
  bool requires_grad() const { return node_ && node_->requires_grad(); }
  Node* node() const { return node_.get(); }
  NodePtr node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

// Leaves.
Var constant(Tensor t);
Var constant_scalar(double v);
Var parameter(Tensor t);  // a leaf that collects gradients

// Generic op node: forward value computed by the caller, backward supplied as
// a callable over Vars.
using VjpFn = std::function<std::vector<Var>(const Var& self, const Var& grad)>;
Var make_op(std::string name, Tensor value, std::vector<Var> inputs, VjpFn vjp);

// Elementwise / scalar.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var square(const Var& a);
Var sqrt(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var abs(const Var& a);

// Structure.
Var reshape(const Var& a, Shape shape);
Var transpose(const Var& a);                          // rank 2
Var slice(const Var& a, int axis, int64_t start, int64_t len);
Var concat0(const std::vector<Var>& parts);           // along axis 0
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a x b^T
Var matmul_tn(const Var& a, const Var& b);  // a^T x b
Var add_rows(const Var& x, const Var& b);             // x:[M,N] + b:[N] per row

// Reductions / broadcast.
Var sum(const Var& a);                                // -> [1]
Var mean(const Var& a);                               // -> [1]
Var expand_scalar(const Var& a, Shape shape);         // [1] -> filled shape
Var row_sum(const Var& a);                            // [M,N] -> [M]
Var max_all(const Var& a);                            // -> [1]; subgradient at argmax
Var detach(const Var& a);

// Sparse constant linear maps (gather/scatter with fixed weights): the one
// primitive behind im2col, transposed convolution, bilinear resampling, axis
// permutation and vertex gathers. apply_transpose is the exact adjoint.
class LinearMap {
 public:
  LinearMap(Shape in_shape, Shape out_shape);
  void add_entry(int64_t out_index, int64_t in_index, double weight);
  void finalize();  // sorts rows; must be called before apply

  Tensor apply(const Tensor& in) const;
  Tensor apply_transpose(const Tensor& out) const;
  const Shape& in_shape() const { return in_shape_; }
  const Shape& out_shape() const { return out_shape_; }

 private:
  Shape in_shape_, out_shape_;
  int64_t in_size_, out_size_;
  bool finalized_ = false;
  std::vector<int64_t> offsets_;  // CSR over output rows, built in finalize()
  std::vector<std::pair<int64_t, int64_t>> coo_;  // (out, entry) while building
  std::vector<int64_t> cols_;
  std::vector<double> weights_;
  std::vector<int64_t> coo_in_;
  std::vector<double> coo_w_;
};

using LinearMapPtr = std::shared_ptr<const LinearMap>;

Var apply_map(const Var& a, LinearMapPtr map);
Var apply_map_transpose(const Var& a, LinearMapPtr map);

// Common maps.
LinearMapPtr make_gather_map(Shape in_shape, Shape out_shape,
                             const std::vector<int64_t>& src_index);
LinearMapPtr make_repeat_cols_map(int64_t n, int64_t k);        // [n] -> [n,k]
LinearMapPtr make_bilinear_upsample_map(int64_t src_side, int64_t dst_side);
LinearMapPtr make_avg_downsample_map(int64_t h, int64_t w, int64_t c, int64_t factor);

// Backward pass. Returns gradients for every visited node that requires
// grad; missing entries mean the root does not depend on that node.
class GradientMap {
 public:
  bool contains(const Var& v) const { return grads_.count(v.node()) != 0; }
  Var at(const Var& v) const;
  Tensor tensor_at(const Var& v) const;  // zeros_like(v) when absent
  void insert(Node* n, Var g) { grads_[n] = std::move(g); }

 private:
  std::unordered_map<Node*, Var> grads_;
};

GradientMap backward(const Var& root);                  // seed: ones
GradientMap backward(const Var& root, const Var& seed);

// Finite-difference gradient of f against perturbations of a raw tensor;
// shared by the oracle-style tests.
Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         double step);

}  // namespace starmesh
