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

#include <map>
#include <string>
#include <vector>

#include "starmesh/autodiff.hpp"
#include "starmesh/rng.hpp"

namespace starmesh {

// Activations are NHWC throughout; convolutions are im2col + matmul so the
// whole stack stays differentiable to any order.

struct NamedParam {
  std::string name;
  Var var;
};

class Linear {
 public:
  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng);
  Var forward(const Var& x) const;  // [M,in] -> [M,out]
  std::vector<NamedParam> params(const std::string& prefix) const;

  Var weight, bias;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int64_t cin, int64_t cout, int kernel, int stride, int pad, Rng& rng);
  Var forward(const Var& x) const;  // [N,H,W,cin] -> [N,OH,OW,cout]
  std::vector<NamedParam> params(const std::string& prefix) const;

  Var weight, bias;  // weight: [k*k*cin, cout]
  int64_t cin = 0, cout = 0;
  int kernel = 0, stride = 1, pad = 0;

 private:
  mutable std::map<std::tuple<int64_t, int64_t, int64_t>, LinearMapPtr> map_cache_;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int64_t cin, int64_t cout, int kernel, int stride, int pad, Rng& rng);
  Var forward(const Var& x) const;  // [N,H,W,cin] -> [N,(H-1)s-2p+k,...,cout]
  std::vector<NamedParam> params(const std::string& prefix) const;

  Var weight, bias;  // weight: [cin, k*k*cout]
  int64_t cin = 0, cout = 0;
  int kernel = 0, stride = 1, pad = 0;

 private:
  mutable std::map<std::tuple<int64_t, int64_t, int64_t>, LinearMapPtr> map_cache_;
};

// im2col index map for NHWC input; entry order within a row is (ki, kj, c).
LinearMapPtr make_im2col_map(int64_t n, int64_t h, int64_t w, int64_t c, int kernel, int stride,
                             int pad);

Var softmax_rows(const Var& logits);  // [N,B] row-wise

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void register_params(const std::vector<NamedParam>& params);
  // Applies one update using grads; parameters without a recorded gradient
  // are left untouched.
  void step(const GradientMap& grads);

  double lr;
  double beta1, beta2, eps;
  int64_t t = 0;

  struct Slot {
    std::string name;
    Var param;
    Tensor m, v;
  };
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::vector<Slot> slots_;
};

}  // namespace starmesh
