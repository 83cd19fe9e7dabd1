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

#include "starmesh/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace starmesh {

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_size(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<int64_t>(data_.size()) != shape_size(shape_)) {
    throw std::invalid_argument("Tensor: data size does not match shape " +
                                shape_to_string(shape_));
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

double Tensor::item() const {
  if (size() != 1) {
    throw std::logic_error("Tensor::item on tensor of size " + std::to_string(size()));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::min() const {
  double m = data_.empty() ? 0.0 : data_[0];
  for (double v : data_) m = std::min(m, v);
  return m;
}

double Tensor::max() const {
  double m = data_.empty() ? 0.0 : data_[0];
  for (double v : data_) m = std::max(m, v);
  return m;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw std::invalid_argument("Tensor::reshaped: size mismatch " + shape_to_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

namespace {
int g_matmul_threads = 1;
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}  // namespace

void set_matmul_threads(int n) {
  g_matmul_threads = std::max(1, n);
#ifdef EIGEN_HAS_OPENMP
  Eigen::setNbThreads(g_matmul_threads);
#endif
}

int matmul_threads() { return g_matmul_threads; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_to_string(a.shape()) +
                                " x " + shape_to_string(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  Eigen::Map<const MatrixRM> ma(a.data(), m, k);
  Eigen::Map<const MatrixRM> mb(b.data(), k, n);
  Eigen::Map<MatrixRM> mo(out.data(), m, n);
  mo.noalias() = ma * mb;
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out(Shape{m, n});
  Eigen::Map<const MatrixRM> ma(a.data(), m, k);
  Eigen::Map<const MatrixRM> mb(b.data(), n, k);
  Eigen::Map<MatrixRM> mo(out.data(), m, n);
  mo.noalias() = ma * mb.transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw std::invalid_argument("matmul_tn: incompatible shapes");
  }
  const int64_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  Eigen::Map<const MatrixRM> ma(a.data(), k, m);
  Eigen::Map<const MatrixRM> mb(b.data(), k, n);
  Eigen::Map<MatrixRM> mo(out.data(), m, n);
  mo.noalias() = ma.transpose() * mb;
  return out;
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("transpose2d: expected rank-2 tensor");
  }
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor out(Shape{n, m});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  }
  return out;
}

}  // namespace starmesh
