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
#include <set>
#include <stdexcept>

#include "starmesh/geometry.hpp"
#include "starmesh/vec.hpp"

using namespace starmesh;

namespace {

// Naive composition oracle: direct bilinear evaluation per output node.
Tensor compose_radial_oracle(const RadialField& f) {
  const int64_t side = f.side();
  Tensor rho(Shape{side, side});
  for (int i = 0; i < RadialField::kBasisCount; ++i) {
    for (int n = RadialField::kMinLevel; n <= f.max_level; ++n) {
      const Tensor& g = f.bases[static_cast<size_t>(i)][static_cast<size_t>(n - 2)];
      const int64_t src = g.dim(0);
      for (int64_t r = 0; r < side; ++r) {
        for (int64_t c = 0; c < side; ++c) {
          const double u = double(r) * double(src - 1) / double(side - 1);
          const double v = double(c) * double(src - 1) / double(side - 1);
          const int64_t i0 = std::min<int64_t>(int64_t(std::floor(u)), src - 2);
          const int64_t j0 = std::min<int64_t>(int64_t(std::floor(v)), src - 2);
          const double fu = u - double(i0), fv = v - double(j0);
          const double val = (1 - fu) * (1 - fv) * g.at(i0, j0) +
                             (1 - fu) * fv * g.at(i0, j0 + 1) +
                             fu * (1 - fv) * g.at(i0 + 1, j0) +
                             fu * fv * g.at(i0 + 1, j0 + 1);
          rho.at(r, c) += f.alphas[i] * val;
        }
      }
    }
  }
  return rho;
}

}  // namespace

TEST_CASE("tessellation counts match the paper resolution and small cases") {
  const TessellationTopology big = build_tessellation(129, 129);
  CHECK(big.vertex_count() == 16641);
  CHECK(big.triangles.size() == 2u * 128u * 129u);

  const TessellationTopology tiny = build_tessellation(2, 3);
  CHECK(tiny.vertex_count() == 6);
  CHECK(tiny.triangles.size() == 6);
  for (const auto& t : tiny.triangles) {
    for (int v : t) CHECK(v < tiny.vertex_count());
  }
}

TEST_CASE("tessellation triangle count equals brute-force cell enumeration") {
  const TessellationTopology topo = build_tessellation(5, 5);
  int cells = 0;
  for (int i = 0; i + 1 < 5; ++i) {
    for (int j = 0; j < 5; ++j) ++cells;
  }
  CHECK(static_cast<int>(topo.triangles.size()) == 2 * cells);
  CHECK(topo.triangles.size() == 40);
}

TEST_CASE("tessellation rejects degenerate grids") {
  CHECK_THROWS_AS(build_tessellation(1, 5), std::invalid_argument);
  CHECK_THROWS_AS(build_tessellation(4, 2), std::invalid_argument);
}

TEST_CASE("tessellation angles lie on the uniform grid") {
  const TessellationTopology topo = build_tessellation(7, 9);
  CHECK(topo.theta[0] == 0.0);
  CHECK(topo.theta[static_cast<size_t>(topo.vertex_index(6, 0))] ==
        doctest::Approx(std::numbers::pi));
  CHECK(topo.phi[static_cast<size_t>(topo.vertex_index(0, 3))] ==
        doctest::Approx(2.0 * std::numbers::pi * 3 / 9));
}

TEST_CASE("winding is outward for a radial surface") {
  TopologyPtr topo = shared_tessellation(9, 12);
  Tensor rho(Shape{9, 12}, 1.0);
  SurfaceMesh mesh = spherical_to_cartesian(rho, topo);
  TriangleNormals tn = triangle_normals(mesh);
  for (size_t t = 0; t < topo->triangles.size(); ++t) {
    if (tn.degenerate[t]) continue;
    const auto& tri = topo->triangles[t];
    Vec3 centroid{};
    for (int k = 0; k < 3; ++k) {
      centroid.x += mesh.positions[3 * tri[static_cast<size_t>(k)]] / 3.0;
      centroid.y += mesh.positions[3 * tri[static_cast<size_t>(k)] + 1] / 3.0;
      centroid.z += mesh.positions[3 * tri[static_cast<size_t>(k)] + 2] / 3.0;
    }
    const Vec3 n{tn.normals[3 * static_cast<int64_t>(t)],
                 tn.normals[3 * static_cast<int64_t>(t) + 1],
                 tn.normals[3 * static_cast<int64_t>(t) + 2]};
    CHECK(dot(n, centroid) > 0);
  }
}

TEST_CASE("upsample preserves constants and the identity case") {
  Tensor c(Shape{5, 5}, 0.7);
  Tensor up = upsample_bilinear(c, 17);
  for (int64_t i = 0; i < up.size(); ++i) CHECK(up[i] == doctest::Approx(0.7).epsilon(1e-15));
  Tensor same = upsample_bilinear(c, 5);
  for (int64_t i = 0; i < c.size(); ++i) CHECK(same[i] == c[i]);
}

TEST_CASE("upsample of a center spike gives hand-computed midpoints") {
  Tensor g(Shape{3, 3});
  g.at(1, 1) = 1.0;
  Tensor up = upsample_bilinear(g, 5);
  CHECK(up.at(2, 2) == doctest::Approx(1.0));
  CHECK(up.at(1, 2) == doctest::Approx(0.5));
  CHECK(up.at(2, 1) == doctest::Approx(0.5));
  CHECK(up.at(3, 2) == doctest::Approx(0.5));
  CHECK(up.at(1, 1) == doctest::Approx(0.25));
  CHECK(up.at(3, 3) == doctest::Approx(0.25));
}

TEST_CASE("upsample rejects bad sides") {
  CHECK_THROWS_AS(upsample_bilinear(Tensor(Shape{4, 4}), 9), std::invalid_argument);
  CHECK_THROWS_AS(upsample_bilinear(Tensor(Shape{5, 5}), 8), std::invalid_argument);
  CHECK_THROWS_AS(upsample_bilinear(Tensor(Shape{9, 9}), 5), std::invalid_argument);
}

TEST_CASE("upsample agrees with the source at coincident lattice nodes") {
  Rng rng(5);
  Tensor g = rng.normal_tensor({9, 9});
  Tensor up = upsample_bilinear(g, 33);
  const int64_t stride = 32 / 8;
  for (int64_t i = 0; i < 9; ++i) {
    for (int64_t j = 0; j < 9; ++j) {
      CHECK(up.at(i * stride, j * stride) == doctest::Approx(g.at(i, j)).epsilon(1e-15));
    }
  }
}

TEST_CASE("compose_radial: average term only") {
  RadialField f = make_radial_field(5, 0.5);
  Tensor rho = compose_radial(f);
  CHECK(rho.shape() == Shape{33, 33});
  for (int64_t i = 0; i < rho.size(); ++i) CHECK(rho[i] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("compose_radial: single active basis scales linearly") {
  RadialField f = make_radial_field(4, 0.0);
  for (auto& level : f.bases[0]) {
    for (int64_t i = 0; i < level.size(); ++i) level[i] = 0.0;
  }
  Rng rng(9);
  Tensor level2 = rng.normal_tensor({5, 5});
  f.bases[1][0] = level2;
  f.alphas[1] = 2.0;
  Tensor rho = compose_radial(f);
  Tensor up = upsample_bilinear(level2, 17);
  for (int64_t i = 0; i < rho.size(); ++i) {
    CHECK(rho[i] == doctest::Approx(2.0 * up[i]).epsilon(1e-13));
  }
}

TEST_CASE("compose_radial matches the naive summation oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    RadialField f = random_radial_field(5, rng, 0.5, 0.05, 0.8);
    Tensor got = compose_radial(f);
    Tensor want = compose_radial_oracle(f);
    for (int64_t i = 0; i < got.size(); ++i) {
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("compose_radial is linear in the learned coefficients") {
  Rng rng(21);
  RadialField f = random_radial_field(4, rng, 0.5, 0.05, 0.5);
  RadialField g = f;
  for (int i = 1; i < RadialField::kBasisCount; ++i) g.alphas[i] = rng.normal();
  RadialField s = f;
  for (int i = 1; i < RadialField::kBasisCount; ++i) s.alphas[i] = f.alphas[i] + g.alphas[i];
  const Tensor rf = compose_radial(f);
  const Tensor rg = compose_radial(g);
  const Tensor rs = compose_radial(s);
  const Tensor avg = compose_radial(make_radial_field(4, 0.5));
  // compose(a+b) = compose(a) + compose(b) - average term (it enters twice).
  for (int64_t i = 0; i < rs.size(); ++i) {
    CHECK(rs[i] == doctest::Approx(rf[i] + rg[i] - avg[i]).epsilon(1e-12));
  }
}

TEST_CASE("compose_radial gradient w.r.t. alphas matches finite differences") {
  Rng rng(33);
  RadialField f = random_radial_field(3, rng, 0.5, 0.08, 0.3);
  std::vector<std::vector<Var>> basis_vars;
  for (const auto& stack : f.bases) {
    std::vector<Var> vars;
    for (const auto& level : stack) vars.push_back(constant(level));
    basis_vars.push_back(std::move(vars));
  }
  Tensor w = rng.uniform_tensor({f.side(), f.side()}, 0.2, 1.0);
  auto loss_for = [&](const Tensor& alphas) {
    Var rho = compose_radial_var(constant(alphas), basis_vars, f.max_level);
    return sum(mul(rho, constant(w))).value().item();
  };
  Var alphas = parameter(f.alphas);
  Var rho = compose_radial_var(alphas, basis_vars, f.max_level);
  Tensor analytic = backward(sum(mul(rho, constant(w)))).at(alphas).value();
  Tensor fd = finite_difference(loss_for, f.alphas, 1e-4);
  for (int64_t i = 0; i < analytic.size(); ++i) {
    CHECK(analytic[i] == doctest::Approx(fd[i]).epsilon(1e-5));
  }
}

TEST_CASE("spherical_to_cartesian unit radii and axis case") {
  TopologyPtr topo = shared_tessellation(9, 8);
  Tensor rho(Shape{9, 8}, 1.0);
  SurfaceMesh mesh = spherical_to_cartesian(rho, topo);
  Tensor radii = radial_distances(mesh);
  for (int64_t i = 0; i < radii.size(); ++i) {
    CHECK(radii[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tensor rho2(Shape{9, 8}, 1.0);
  const int v = topo->vertex_index(4, 0);
  rho2[v] = 2.0;
  SurfaceMesh mesh2 = spherical_to_cartesian(rho2, topo);
  CHECK(mesh2.positions[3 * v + 0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(mesh2.positions[3 * v + 1] == doctest::Approx(0.0));
  CHECK(std::abs(mesh2.positions[3 * v + 2]) < 1e-12);
}

TEST_CASE("spherical_to_cartesian recovers random radii exactly") {
  TopologyPtr topo = shared_tessellation(17, 17);
  Rng rng(51);
  Tensor rho = rng.uniform_tensor({17, 17}, 0.2, 1.4);
  SurfaceMesh mesh = spherical_to_cartesian(rho, topo);
  Tensor radii = radial_distances(mesh);
  for (int64_t i = 0; i < radii.size(); ++i) {
    CHECK(radii[i] == doctest::Approx(rho[i]).epsilon(1e-12));
  }
}

TEST_CASE("spherical_to_cartesian rejects bad radii") {
  TopologyPtr topo = shared_tessellation(5, 5);
  Tensor zero(Shape{5, 5}, 0.0);
  CHECK_THROWS_AS(spherical_to_cartesian(zero, topo), std::invalid_argument);
  Tensor nan(Shape{5, 5}, 1.0);
  nan[7] = std::nan("");
  CHECK_THROWS_AS(spherical_to_cartesian(nan, topo), std::invalid_argument);
  CHECK_THROWS_AS(spherical_to_cartesian(Tensor(Shape{4, 4}, 1.0), topo),
                  std::invalid_argument);
}

TEST_CASE("triangle normals: planar case, orthogonality, degeneracy flag") {
  auto topo = std::make_shared<TessellationTopology>();
  topo->rows = 1;
  topo->cols = 4;
  topo->theta.assign(4, 0.0);
  topo->phi.assign(4, 0.0);
  topo->triangles = {{0, 1, 2}, {0, 1, 3}};  // second is degenerate
  SurfaceMesh mesh;
  mesh.topology = topo;
  mesh.positions = Tensor(Shape{4, 3}, {0, 0, 0, 1, 0, 0, 0, 1, 0, 2, 0, 0});
  TriangleNormals tn = triangle_normals(mesh);
  CHECK(tn.normals[0] == doctest::Approx(0.0));
  CHECK(tn.normals[1] == doctest::Approx(0.0));
  CHECK(tn.normals[2] == doctest::Approx(1.0));  // counter-clockwise in z=0
  CHECK(tn.degenerate[1] == 1);

  Rng rng(61);
  SurfaceMesh rnd;
  rnd.topology = topo;
  rnd.positions = rng.normal_tensor({4, 3});
  TriangleNormals rn = triangle_normals(rnd);
  if (!rn.degenerate[0]) {
    const Vec3 n{rn.normals[0], rn.normals[1], rn.normals[2]};
    const Vec3 a{rnd.positions[0], rnd.positions[1], rnd.positions[2]};
    const Vec3 b{rnd.positions[3], rnd.positions[4], rnd.positions[5]};
    const Vec3 c{rnd.positions[6], rnd.positions[7], rnd.positions[8]};
    CHECK(std::abs(dot(n, b - a)) < 1e-9);
    CHECK(std::abs(dot(n, c - a)) < 1e-9);
  }
}

TEST_CASE("enforce_scale: identity, exact rescale, idempotence") {
  Tensor rho(Shape{4}, {0.8, 0.5, 0.2, 0.6});
  auto [same, f1] = enforce_scale_radial(rho, 1.0);
  CHECK(f1 == 1.0);
  for (int64_t i = 0; i < 4; ++i) CHECK(same[i] == rho[i]);

  Tensor rho2(Shape{4}, {2.0, 0.5, 1.0, 1.5});
  auto [scaled, f2] = enforce_scale_radial(rho2, 1.0);
  CHECK(f2 == doctest::Approx(0.5));
  CHECK(scaled.max() == doctest::Approx(1.0));
  auto [again, f3] = enforce_scale_radial(scaled, 1.0);
  CHECK(f3 == 1.0);
  for (int64_t i = 0; i < 4; ++i) CHECK(again[i] == scaled[i]);
}

TEST_CASE("enforce_scale random mesh hits the bound exactly when triggered") {
  Rng rng(71);
  TopologyPtr topo = shared_tessellation(9, 9);
  Tensor rho = rng.uniform_tensor({9, 9}, 0.5, 2.5);
  SurfaceMesh mesh = spherical_to_cartesian(rho, topo);
  auto [scaled, factor] = enforce_scale(mesh, 1.0);
  CHECK(factor < 1.0);
  CHECK(radial_distances(scaled).max() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("enforce_scale_var is differentiable through the max") {
  Tensor rho0(Shape{3}, {0.5, 2.0, 1.0});
  auto loss_for = [&](const Tensor& t) {
    Var scaled = enforce_scale_var(constant(t), 1.0);
    return sum(square(scaled)).value().item();
  };
  Var rho = parameter(rho0);
  Var scaled = enforce_scale_var(rho, 1.0);
  Tensor analytic = backward(sum(square(scaled))).at(rho).value();
  Tensor fd = finite_difference(loss_for, rho0, 1e-6);
  for (int64_t i = 0; i < 3; ++i) CHECK(analytic[i] == doctest::Approx(fd[i]).epsilon(1e-5));
}

TEST_CASE("triangle adjacency pairs every interior edge once") {
  const TessellationTopology topo = build_tessellation(5, 6);
  const auto pairs = triangle_adjacency(topo);
  std::set<std::pair<int, int>> seen(pairs.begin(), pairs.end());
  CHECK(seen.size() == pairs.size());
  for (const auto& [a, b] : pairs) {
    CHECK(a < b);
    CHECK(b < static_cast<int>(topo.triangles.size()));
  }
  CHECK(pairs.size() > topo.triangles.size());
}
