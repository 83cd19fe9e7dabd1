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

#include "starmesh/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace starmesh {

namespace {

Tensor fan_in_init(Shape shape, int64_t fan_in, Rng& rng) {
  return rng.normal_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

}  // namespace

LinearMapPtr make_im2col_map(int64_t n, int64_t h, int64_t w, int64_t c, int kernel, int stride,
                             int pad) {
  const int64_t oh = (h + 2 * pad - kernel) / stride + 1;
  const int64_t ow = (w + 2 * pad - kernel) / stride + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("make_im2col_map: empty output");
  auto map = std::make_shared<LinearMap>(Shape{n, h, w, c},
                                         Shape{n * oh * ow, kernel * kernel * c});
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t oi = 0; oi < oh; ++oi) {
      for (int64_t oj = 0; oj < ow; ++oj) {
        const int64_t row = (b * oh + oi) * ow + oj;
        for (int ki = 0; ki < kernel; ++ki) {
          for (int kj = 0; kj < kernel; ++kj) {
            const int64_t ii = oi * stride - pad + ki;
            const int64_t jj = oj * stride - pad + kj;
            if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;  // zero pad
            for (int64_t ch = 0; ch < c; ++ch) {
              const int64_t out_idx =
                  row * (kernel * kernel * c) + (ki * kernel + kj) * c + ch;
              const int64_t in_idx = ((b * h + ii) * w + jj) * c + ch;
              map->add_entry(out_idx, in_idx, 1.0);
            }
          }
        }
      }
    }
  }
  map->finalize();
  return map;
}

Linear::Linear(int64_t in, int64_t out, Rng& rng)
    : weight(parameter(fan_in_init(Shape{in, out}, in, rng))),
      bias(parameter(Tensor(Shape{out}))) {}

Var Linear::forward(const Var& x) const { return add_rows(matmul(x, weight), bias); }

std::vector<NamedParam> Linear::params(const std::string& prefix) const {
  return {{prefix + ".weight", weight}, {prefix + ".bias", bias}};
}

Conv2d::Conv2d(int64_t cin_, int64_t cout_, int kernel_, int stride_, int pad_, Rng& rng)
    : weight(parameter(fan_in_init(Shape{int64_t(kernel_) * kernel_ * cin_, cout_},
                                   int64_t(kernel_) * kernel_ * cin_, rng))),
      bias(parameter(Tensor(Shape{cout_}))),
      cin(cin_),
      cout(cout_),
      kernel(kernel_),
      stride(stride_),
      pad(pad_) {}

Var Conv2d::forward(const Var& x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[3] != cin) {
    throw std::invalid_argument("Conv2d: expected NHWC input with C=" + std::to_string(cin));
  }
  const int64_t n = s[0], h = s[1], w = s[2];
  auto key = std::make_tuple(n, h, w);
  auto it = map_cache_.find(key);
  if (it == map_cache_.end()) {
    it = map_cache_.emplace(key, make_im2col_map(n, h, w, cin, kernel, stride, pad)).first;
  }
  const int64_t oh = (h + 2 * pad - kernel) / stride + 1;
  const int64_t ow = (w + 2 * pad - kernel) / stride + 1;
  Var cols = apply_map(x, it->second);  // [n*oh*ow, k*k*cin]
  Var y = add_rows(matmul(cols, weight), bias);
  return reshape(y, Shape{n, oh, ow, cout});
}

std::vector<NamedParam> Conv2d::params(const std::string& prefix) const {
  return {{prefix + ".weight", weight}, {prefix + ".bias", bias}};
}

ConvTranspose2d::ConvTranspose2d(int64_t cin_, int64_t cout_, int kernel_, int stride_, int pad_,
                                 Rng& rng)
    : weight(parameter(fan_in_init(Shape{cin_, int64_t(kernel_) * kernel_ * cout_}, cin_, rng))),
      bias(parameter(Tensor(Shape{cout_}))),
      cin(cin_),
      cout(cout_),
      kernel(kernel_),
      stride(stride_),
      pad(pad_) {}

Var ConvTranspose2d::forward(const Var& x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[3] != cin) {
    throw std::invalid_argument("ConvTranspose2d: expected NHWC input with C=" +
                                std::to_string(cin));
  }
  const int64_t n = s[0], h = s[1], w = s[2];
  const int64_t oh = (h - 1) * stride - 2 * pad + kernel;
  const int64_t ow = (w - 1) * stride - 2 * pad + kernel;
  auto key = std::make_tuple(n, h, w);
  auto it = map_cache_.find(key);
  if (it == map_cache_.end()) {
    // Transposed convolution is the adjoint of the matching forward
    // convolution over the *output* geometry.
    it = map_cache_.emplace(key, make_im2col_map(n, oh, ow, cout, kernel, stride, pad)).first;
  }
  Var x2d = reshape(x, Shape{n * h * w, cin});
  Var cols = matmul(x2d, weight);  // [n*h*w, k*k*cout]
  Var y = apply_map_transpose(cols, it->second);  // [n, oh, ow, cout]
  Var y2d = reshape(y, Shape{n * oh * ow, cout});
  return reshape(add_rows(y2d, bias), Shape{n, oh, ow, cout});
}

std::vector<NamedParam> ConvTranspose2d::params(const std::string& prefix) const {
  return {{prefix + ".weight", weight}, {prefix + ".bias", bias}};
}

Var softmax_rows(const Var& logits) {
  if (logits.shape().size() != 2) throw std::invalid_argument("softmax_rows: expected [N,B]");
  const int64_t n = logits.shape()[0], b = logits.shape()[1];
  // Shift by the row max for stability; the shift is constant w.r.t. grads.
  Tensor shift(Shape{n, b});
  for (int64_t i = 0; i < n; ++i) {
    double m = logits.value()[i * b];
    for (int64_t j = 1; j < b; ++j) m = std::max(m, logits.value()[i * b + j]);
    for (int64_t j = 0; j < b; ++j) shift[i * b + j] = m;
  }
  Var e = exp(sub(logits, constant(shift)));
  Var denom = apply_map(row_sum(e), make_repeat_cols_map(n, b));
  return div(e, denom);
}

Adam::Adam(double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {}

void Adam::register_params(const std::vector<NamedParam>& params) {
  for (const auto& p : params) {
    slots_.push_back(Slot{p.name, p.var, Tensor(p.var.shape()), Tensor(p.var.shape())});
  }
}

void Adam::step(const GradientMap& grads) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (auto& slot : slots_) {
    if (!grads.contains(slot.param)) continue;
    const Tensor g = grads.at(slot.param).value();
    Tensor& value = slot.param.node()->mutable_value();
    for (int64_t i = 0; i < value.size(); ++i) {
      slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g[i];
      slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace starmesh
