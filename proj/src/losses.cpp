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

#include "starmesh/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace starmesh {

WganLosses wgan_losses(const Tensor& critic_real, const Tensor& critic_fake) {
  if (critic_real.size() == 0 || critic_fake.size() == 0) {
    throw std::invalid_argument("wgan_losses: empty batch");
  }
  double mr = 0, mf = 0;
  for (int64_t i = 0; i < critic_real.size(); ++i) mr += critic_real[i];
  for (int64_t i = 0; i < critic_fake.size(); ++i) mf += critic_fake[i];
  mr /= static_cast<double>(critic_real.size());
  mf /= static_cast<double>(critic_fake.size());
  return {mf - mr, -mf};
}

std::pair<Var, Var> wgan_losses_var(const Var& real_scores, const Var& fake_scores) {
  if (real_scores.size() == 0 || fake_scores.size() == 0) {
    throw std::invalid_argument("wgan_losses_var: empty batch");
  }
  Var mf = mean(fake_scores);
  Var critic_loss = sub(mf, mean(real_scores));
  return {critic_loss, neg(mf)};
}

Var gradient_penalty_with_eps(const std::function<Var(const Var&)>& critic, const Tensor& real,
                              const Tensor& fake, double lambda, const Tensor& eps) {
  if (!real.same_shape(fake)) {
    throw std::invalid_argument("gradient_penalty: real/fake shape mismatch");
  }
  if (real.rank() < 1 || eps.size() != real.dim(0)) {
    throw std::invalid_argument("gradient_penalty: eps must have one entry per sample");
  }
  const int64_t n = real.dim(0);
  const int64_t per = real.size() / n;

  Tensor mixed(real.shape());
  for (int64_t i = 0; i < n; ++i) {
    const double e = eps[i];
    for (int64_t k = 0; k < per; ++k) {
      mixed[i * per + k] = e * real[i * per + k] + (1.0 - e) * fake[i * per + k];
    }
  }
  Var xhat = parameter(std::move(mixed));
  Var scores = critic(xhat);
  // d(sum of scores)/d(xhat), kept as a graph so the penalty still
  // differentiates to the critic parameters.
  GradientMap grads = backward(sum(scores));
  if (!grads.contains(xhat)) {
    throw std::logic_error("gradient_penalty: critic ignores its input");
  }
  Var g = reshape(grads.at(xhat), Shape{n, per});
  Var norms = sqrt(add_scalar(row_sum(square(g)), 1e-24));
  return mul_scalar(mean(square(add_scalar(norms, -1.0))), lambda);
}

Var gradient_penalty(const std::function<Var(const Var&)>& critic, const Tensor& real,
                     const Tensor& fake, double lambda, Rng& rng) {
  if (real.rank() < 1) throw std::invalid_argument("gradient_penalty: empty batch");
  Tensor eps(Shape{real.dim(0)});
  for (int64_t i = 0; i < eps.size(); ++i) eps[i] = rng.uniform();
  return gradient_penalty_with_eps(critic, real, fake, lambda, eps);
}

Var smoothing_loss_var(const Var& positions, const TessellationTopology& topo,
                       double area_eps) {
  const int64_t v = topo.vertex_count();
  if (positions.shape() != Shape{v, 3}) {
    throw std::invalid_argument("smoothing_loss: positions must be [V,3]");
  }
  const auto pairs = triangle_adjacency(topo);
  const int64_t t = static_cast<int64_t>(topo.triangles.size());

  // Per-coordinate vertex columns, then per-corner gathers.
  Var px = reshape(slice(positions, 1, 0, 1), Shape{v});
  Var py = reshape(slice(positions, 1, 1, 1), Shape{v});
  Var pz = reshape(slice(positions, 1, 2, 1), Shape{v});
  std::vector<int64_t> idx0(static_cast<size_t>(t)), idx1(static_cast<size_t>(t)),
      idx2(static_cast<size_t>(t));
  for (int64_t k = 0; k < t; ++k) {
    idx0[static_cast<size_t>(k)] = topo.triangles[static_cast<size_t>(k)][0];
    idx1[static_cast<size_t>(k)] = topo.triangles[static_cast<size_t>(k)][1];
    idx2[static_cast<size_t>(k)] = topo.triangles[static_cast<size_t>(k)][2];
  }
  auto g0 = make_gather_map(Shape{v}, Shape{t}, idx0);
  auto g1 = make_gather_map(Shape{v}, Shape{t}, idx1);
  auto g2 = make_gather_map(Shape{v}, Shape{t}, idx2);

  auto corner = [&](const Var& coord, const LinearMapPtr& m) { return apply_map(coord, m); };
  Var x0 = corner(px, g0), y0 = corner(py, g0), z0 = corner(pz, g0);
  Var x1 = corner(px, g1), y1 = corner(py, g1), z1 = corner(pz, g1);
  Var x2 = corner(px, g2), y2 = corner(py, g2), z2 = corner(pz, g2);

  Var e1x = sub(x1, x0), e1y = sub(y1, y0), e1z = sub(z1, z0);
  Var e2x = sub(x2, x0), e2y = sub(y2, y0), e2z = sub(z2, z0);
  Var nx = sub(mul(e1y, e2z), mul(e1z, e2y));
  Var ny = sub(mul(e1z, e2x), mul(e1x, e2z));
  Var nz = sub(mul(e1x, e2y), mul(e1y, e2x));
  Var len = sqrt(add(add(square(nx), square(ny)), square(nz)));

  // Degenerate triangles (|n| == 2*area below threshold) are masked out of
  // every pair; the mask is data-dependent but locally constant.
  std::vector<uint8_t> degenerate(static_cast<size_t>(t), 0);
  for (int64_t k = 0; k < t; ++k) {
    if (len.value()[k] <= 2.0 * area_eps) degenerate[static_cast<size_t>(k)] = 1;
  }

  const int64_t p = static_cast<int64_t>(pairs.size());
  std::vector<int64_t> pa(static_cast<size_t>(p)), pb(static_cast<size_t>(p));
  Tensor mask(Shape{p});
  int64_t active = 0;
  for (int64_t k = 0; k < p; ++k) {
    pa[static_cast<size_t>(k)] = pairs[static_cast<size_t>(k)].first;
    pb[static_cast<size_t>(k)] = pairs[static_cast<size_t>(k)].second;
    const bool ok = !degenerate[static_cast<size_t>(pairs[static_cast<size_t>(k)].first)] &&
                    !degenerate[static_cast<size_t>(pairs[static_cast<size_t>(k)].second)];
    mask[k] = ok ? 1.0 : 0.0;
    if (ok) ++active;
  }
  if (active == 0) return constant_scalar(0.0);
  auto ga = make_gather_map(Shape{t}, Shape{p}, pa);
  auto gb = make_gather_map(Shape{t}, Shape{p}, pb);

  // Avoid dividing masked-out normals by ~zero lengths.
  Tensor len_guard(Shape{t});
  for (int64_t k = 0; k < t; ++k) {
    len_guard[k] = degenerate[static_cast<size_t>(k)] ? 1.0 : 0.0;
  }
  Var safe_len = add(len, constant(len_guard));
  Var ux = div(nx, safe_len), uy = div(ny, safe_len), uz = div(nz, safe_len);

  Var dots = add(add(mul(apply_map(ux, ga), apply_map(ux, gb)),
                     mul(apply_map(uy, ga), apply_map(uy, gb))),
                 mul(apply_map(uz, ga), apply_map(uz, gb)));
  Var terms = mul(constant(mask), add_scalar(neg(dots), 1.0));
  return sum(terms);
}

double smoothing_loss(const SurfaceMesh& mesh) {
  Var positions = constant(mesh.positions);
  return smoothing_loss_var(positions, *mesh.topology).value().item();
}

double autoencoder_loss(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("autoencoder_loss: shape mismatch");
  double s = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

Var autoencoder_loss_var(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("autoencoder_loss: shape mismatch");
  return mean(square(sub(a, b)));
}

Var combined_generator_objective(const Var& generator_loss, const Var& smoothing,
                                 double lambda_smooth) {
  if (lambda_smooth == 0.0) return generator_loss;
  return add(generator_loss, mul_scalar(smoothing, lambda_smooth));
}

}  // namespace starmesh
