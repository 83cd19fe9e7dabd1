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

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "starmesh/camera.hpp"
#include "starmesh/losses.hpp"
#include "starmesh/nn.hpp"

using namespace starmesh;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Brute-force smoothing oracle: rebuild adjacency by scanning all triangle
// pairs for shared edges and sum 1 - n_i.n_j directly.
double smoothing_oracle(const SurfaceMesh& mesh) {
  const auto& tris = mesh.topology->triangles;
  TriangleNormals tn = triangle_normals(mesh);
  double total = 0;
  for (size_t a = 0; a < tris.size(); ++a) {
    for (size_t b = a + 1; b < tris.size(); ++b) {
      int shared = 0;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          if (tris[a][static_cast<size_t>(i)] == tris[b][static_cast<size_t>(j)]) ++shared;
        }
      }
      if (shared != 2) continue;
      if (tn.degenerate[a] || tn.degenerate[b]) continue;
      double dot = 0;
      for (int c = 0; c < 3; ++c) {
        dot += tn.normals[3 * static_cast<int64_t>(a) + c] *
               tn.normals[3 * static_cast<int64_t>(b) + c];
      }
      total += 1.0 - dot;
    }
  }
  return total;
}

SurfaceMesh patch_mesh(const std::vector<double>& positions,
                       std::vector<std::array<int, 3>> tris) {
  auto topo = std::make_shared<TessellationTopology>();
  const int v = static_cast<int>(positions.size() / 3);
  topo->rows = 1;
  topo->cols = v;
  topo->theta.assign(static_cast<size_t>(v), 0.0);
  topo->phi.assign(static_cast<size_t>(v), 0.0);
  topo->triangles = std::move(tris);
  SurfaceMesh mesh;
  mesh.topology = topo;
  mesh.positions = Tensor(Shape{v, 3}, std::vector<double>(positions));
  return mesh;
}

}  // namespace

TEST_CASE("wgan losses: symmetric, direct, and oracle cases") {
  Tensor same(Shape{3}, {0.2, -0.1, 0.4});
  const WganLosses eq = wgan_losses(same, same);
  CHECK(eq.critic_loss == doctest::Approx(0.0));

  Tensor real(Shape{2}, {1.0, 1.0});
  Tensor fake(Shape{2}, {0.0, 0.0});
  const WganLosses unit = wgan_losses(real, fake);
  CHECK(-unit.critic_loss == doctest::Approx(1.0));  // critic objective value
  CHECK(unit.generator_loss == doctest::Approx(0.0));

  Rng rng(3);
  Tensor r = rng.normal_tensor({17});
  Tensor f = rng.normal_tensor({11});
  double mr = 0, mf = 0;
  for (int64_t i = 0; i < r.size(); ++i) mr += r[i];
  for (int64_t i = 0; i < f.size(); ++i) mf += f[i];
  mr /= 17;
  mf /= 11;
  const WganLosses w = wgan_losses(r, f);
  CHECK(w.critic_loss == doctest::Approx(mf - mr).epsilon(1e-12));
  CHECK(w.generator_loss == doctest::Approx(-mf).epsilon(1e-12));
  CHECK_THROWS_AS(wgan_losses(Tensor(Shape{0}), f), std::invalid_argument);
}

TEST_CASE("wgan var losses agree with the plain version") {
  Rng rng(5);
  Tensor r = rng.normal_tensor({8});
  Tensor f = rng.normal_tensor({8});
  auto [cl, gl] = wgan_losses_var(constant(r), constant(f));
  const WganLosses plain = wgan_losses(r, f);
  CHECK(cl.value().item() == doctest::Approx(plain.critic_loss).epsilon(1e-12));
  CHECK(gl.value().item() == doctest::Approx(plain.generator_loss).epsilon(1e-12));
}

TEST_CASE("gradient penalty: unit-gradient linear critic scores zero") {
  // critic(x) = <w, x> with ||w|| = 1.
  Tensor w(Shape{4, 1}, {0.5, 0.5, 0.5, 0.5});
  auto critic = [&](const Var& x) { return matmul(reshape(x, Shape{x.shape()[0], 4}), constant(w)); };
  Rng rng(7);
  Tensor real = rng.normal_tensor({3, 4});
  Tensor fake = rng.normal_tensor({3, 4});
  Var gp = gradient_penalty(critic, real, fake, 10.0, rng);
  CHECK(gp.value().item() == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("gradient penalty: doubled critic pays (2-1)^2") {
  Tensor w(Shape{4, 1}, {1.0, 0.0, 0.0, 0.0});
  auto critic = [&](const Var& x) {
    return mul_scalar(matmul(reshape(x, Shape{x.shape()[0], 4}), constant(w)), 2.0);
  };
  Rng rng(9);
  Tensor real = rng.normal_tensor({5, 4});
  Tensor fake = rng.normal_tensor({5, 4});
  Var gp = gradient_penalty(critic, real, fake, 10.0, rng);
  CHECK(gp.value().item() == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("gradient penalty value matches a finite-difference gradient-norm oracle") {
  Rng rng(11);
  Linear l1(6, 5, rng), l2(5, 1, rng);
  auto critic = [&](const Var& x) {
    Var flat = reshape(x, Shape{x.shape()[0], 6});
    return l2.forward(leaky_relu(l1.forward(flat), 0.2));
  };
  Tensor real = rng.normal_tensor({4, 6});
  Tensor fake = rng.normal_tensor({4, 6});
  Tensor eps(Shape{4});
  for (int64_t i = 0; i < 4; ++i) eps[i] = rng.uniform();
  Var gp = gradient_penalty_with_eps(critic, real, fake, 10.0, eps);

  // Oracle: numerically differentiate the critic at each mixed sample.
  double expect = 0;
  for (int64_t s = 0; s < 4; ++s) {
    Tensor x(Shape{1, 6});
    for (int64_t k = 0; k < 6; ++k) {
      x[k] = eps[s] * real[s * 6 + k] + (1 - eps[s]) * fake[s * 6 + k];
    }
    double norm2 = 0;
    for (int64_t k = 0; k < 6; ++k) {
      const double h = 1e-6;
      Tensor xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const double fp = critic(constant(xp)).value().item();
      const double fm = critic(constant(xm)).value().item();
      const double g = (fp - fm) / (2 * h);
      norm2 += g * g;
    }
    const double n = std::sqrt(norm2);
    expect += (n - 1) * (n - 1);
  }
  expect = 10.0 * expect / 4.0;
  CHECK(gp.value().item() == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("gradient penalty parameter gradients match finite differences") {
  Rng rng(13);
  Linear l1(4, 3, rng), l2(3, 1, rng);
  auto critic = [&](const Var& x) {
    Var flat = reshape(x, Shape{x.shape()[0], 4});
    return l2.forward(sigmoid(l1.forward(flat)));
  };
  Tensor real = rng.normal_tensor({3, 4});
  Tensor fake = rng.normal_tensor({3, 4});
  Tensor eps(Shape{3});
  for (int64_t i = 0; i < 3; ++i) eps[i] = rng.uniform();

  Var gp = gradient_penalty_with_eps(critic, real, fake, 10.0, eps);
  GradientMap grads = backward(gp);
  for (const Var& p : {l1.weight, l1.bias, l2.weight, l2.bias}) {
    Tensor fd = finite_difference(
        [&](const Tensor& t) {
          const Tensor saved = p.node()->value();
          p.node()->mutable_value() = t;
          const double v =
              gradient_penalty_with_eps(critic, real, fake, 10.0, eps).value().item();
          p.node()->mutable_value() = saved;
          return v;
        },
        p.value(), 1e-6);
    INFO("param with ", p.size(), " entries");
    CHECK(max_abs_diff(grads.tensor_at(p), fd) < 1e-5);
  }
}

TEST_CASE("gradient penalty is symmetric under swapping real and fake") {
  Rng rng(17);
  Linear l1(4, 3, rng), l2(3, 1, rng);
  auto critic = [&](const Var& x) {
    Var flat = reshape(x, Shape{x.shape()[0], 4});
    return l2.forward(leaky_relu(l1.forward(flat), 0.2));
  };
  Tensor real = rng.normal_tensor({4, 4});
  Tensor fake = rng.normal_tensor({4, 4});
  Tensor eps(Shape{4});
  for (int64_t i = 0; i < 4; ++i) eps[i] = rng.uniform();
  Tensor eps_flipped(Shape{4});
  for (int64_t i = 0; i < 4; ++i) eps_flipped[i] = 1.0 - eps[i];
  const double a = gradient_penalty_with_eps(critic, real, fake, 10.0, eps).value().item();
  const double b =
      gradient_penalty_with_eps(critic, fake, real, 10.0, eps_flipped).value().item();
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("smoothing loss: flat patch is exactly zero") {
  // Two coplanar triangles sharing an edge.
  SurfaceMesh mesh = patch_mesh({0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0},
                                {{0, 1, 2}, {1, 3, 2}});
  CHECK(smoothing_loss(mesh) == 0.0);
}

TEST_CASE("smoothing loss: right-angle fold contributes exactly one") {
  SurfaceMesh mesh = patch_mesh({0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0, 1},
                                {{0, 1, 2}, {0, 3, 1}});
  CHECK(smoothing_loss(mesh) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("smoothing loss matches the brute-force adjacency oracle on a sphere") {
  TopologyPtr topo = shared_tessellation(17, 17);
  Tensor rho(Shape{17, 17}, 1.0);
  SurfaceMesh mesh = spherical_to_cartesian(rho, topo);
  const double fast = smoothing_loss(mesh);
  const double slow = smoothing_oracle(mesh);
  CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
  CHECK(fast >= 0.0);
}

TEST_CASE("smoothing loss is invariant under rotation and uniform scale") {
  Rng rng(23);
  TopologyPtr topo = shared_tessellation(9, 9);
  Tensor rho = rng.uniform_tensor({9, 9}, 0.4, 0.9);
  SurfaceMesh mesh = spherical_to_cartesian(rho, topo);
  const double base = smoothing_loss(mesh);

  const Mat3 r = rotation_matrix(Viewpoint{0.3, -0.8, 0.2}, RotationOrder::kXY);
  SurfaceMesh rotated = mesh;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const Vec3 p{mesh.positions[3 * v], mesh.positions[3 * v + 1], mesh.positions[3 * v + 2]};
    const Vec3 q = r * p;
    rotated.positions[3 * v] = q.x;
    rotated.positions[3 * v + 1] = q.y;
    rotated.positions[3 * v + 2] = q.z;
  }
  CHECK(smoothing_loss(rotated) == doctest::Approx(base).epsilon(1e-9));

  SurfaceMesh scaled = mesh;
  for (int64_t i = 0; i < scaled.positions.size(); ++i) scaled.positions[i] *= 3.7;
  CHECK(smoothing_loss(scaled) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("smoothing loss gradient matches finite differences") {
  Rng rng(29);
  TopologyPtr topo = shared_tessellation(5, 5);
  Tensor rho = rng.uniform_tensor({5, 5}, 0.4, 0.8);
  SurfaceMesh mesh = spherical_to_cartesian(rho, topo);
  Var positions = parameter(mesh.positions);
  Tensor analytic = backward(smoothing_loss_var(positions, *topo)).at(positions).value();
  Tensor fd = finite_difference(
      [&](const Tensor& t) {
        return smoothing_loss_var(constant(t), *topo).value().item();
      },
      mesh.positions, 1e-6);
  for (int64_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-4});
    CHECK(std::abs(analytic[i] - fd[i]) / denom < 1e-4);
  }
}

TEST_CASE("degenerate triangles are excluded from smoothing sums") {
  // Second triangle has zero area; only pairs among non-degenerate ones count.
  SurfaceMesh mesh = patch_mesh({0, 0, 0, 1, 0, 0, 0, 1, 0, 2, 0, 0},
                                {{0, 1, 2}, {0, 1, 3}});
  CHECK(smoothing_loss(mesh) == 0.0);  // the only pair touches a degenerate
}

TEST_CASE("autoencoder loss: zero, offset, oracle, and shape errors") {
  Rng rng(31);
  Tensor a = rng.uniform_tensor({4, 4, 3}, 0, 1);
  CHECK(autoencoder_loss(a, a) == 0.0);

  Tensor b = a;
  for (int64_t i = 0; i < b.size(); ++i) b[i] += 0.1;
  CHECK(autoencoder_loss(a, b) == doctest::Approx(0.01).epsilon(1e-12));

  Tensor c = rng.uniform_tensor({4, 4, 3}, 0, 1);
  double naive = 0;
  for (int64_t i = 0; i < a.size(); ++i) naive += (a[i] - c[i]) * (a[i] - c[i]);
  naive /= static_cast<double>(a.size());
  CHECK(autoencoder_loss(a, c) == doctest::Approx(naive).epsilon(1e-12));
  CHECK_THROWS_AS(autoencoder_loss(a, Tensor(Shape{4, 4})), std::invalid_argument);
}

TEST_CASE("combined generator objective is a weighted sum") {
  Var g = constant_scalar(0.7);
  Var s = constant_scalar(2.0);
  CHECK(combined_generator_objective(g, s, 0.0).value().item() == doctest::Approx(0.7));
  CHECK(combined_generator_objective(g, s, 0.25).value().item() ==
        doctest::Approx(0.7 + 0.25 * 2.0).epsilon(1e-15));
}
