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

#include "starmesh/geometry.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "starmesh/vec.hpp"

namespace starmesh {

namespace {

bool is_pow2_plus_one(int64_t side) {
  if (side < 2) return false;
  const int64_t n = side - 1;
  return (n & (n - 1)) == 0;
}

}  // namespace

// Upsample maps are rebuilt constantly inside generator forwards; memoize.
LinearMapPtr upsample_map(int64_t src, int64_t dst) {
  static std::mutex mu;
  static std::map<std::pair<int64_t, int64_t>, LinearMapPtr> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(src, dst);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, make_bilinear_upsample_map(src, dst)).first;
  }
  return it->second;
}

TessellationTopology build_tessellation(int rows, int cols) {
  if (rows < 2) throw std::invalid_argument("build_tessellation: rows must be >= 2");
  if (cols < 3) throw std::invalid_argument("build_tessellation: cols must be >= 3");
  TessellationTopology topo;
  topo.rows = rows;
  topo.cols = cols;
  topo.theta.resize(static_cast<size_t>(rows) * cols);
  topo.phi.resize(static_cast<size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i) {
    const double theta = std::numbers::pi * static_cast<double>(i) / (rows - 1);
    for (int j = 0; j < cols; ++j) {
      const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / cols;
      const size_t v = static_cast<size_t>(topo.vertex_index(i, j));
      topo.theta[v] = theta;
      topo.phi[v] = phi;
    }
  }
  // Each band cell (i,j)-(i+1,j+1 mod cols) splits along the a-d diagonal.
  // Ordered (theta+, then phi+) so cross(v1-v0, v2-v0) points outward on a
  // radial surface.
  topo.triangles.reserve(static_cast<size_t>(2) * (rows - 1) * cols);
  for (int i = 0; i + 1 < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const int jn = (j + 1) % cols;
      const int a = topo.vertex_index(i, j);
      const int b = topo.vertex_index(i + 1, j);
      const int c = topo.vertex_index(i, jn);
      const int d = topo.vertex_index(i + 1, jn);
      topo.triangles.push_back({a, b, d});
      topo.triangles.push_back({a, d, c});
    }
  }
  return topo;
}

TopologyPtr shared_tessellation(int rows, int cols) {
  return std::make_shared<const TessellationTopology>(build_tessellation(rows, cols));
}

std::vector<std::pair<int, int>> triangle_adjacency(const TessellationTopology& topo) {
  std::map<std::pair<int, int>, std::vector<int>> edge_tris;
  for (size_t t = 0; t < topo.triangles.size(); ++t) {
    const auto& tri = topo.triangles[t];
    for (int e = 0; e < 3; ++e) {
      int a = tri[static_cast<size_t>(e)];
      int b = tri[static_cast<size_t>((e + 1) % 3)];
      if (a > b) std::swap(a, b);
      edge_tris[{a, b}].push_back(static_cast<int>(t));
    }
  }
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [edge, tris] : edge_tris) {
    for (size_t i = 0; i < tris.size(); ++i) {
      for (size_t j = i + 1; j < tris.size(); ++j) {
        pairs.emplace_back(std::min(tris[i], tris[j]), std::max(tris[i], tris[j]));
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

void RadialField::validate() const {
  if (max_level < kMinLevel) throw std::invalid_argument("RadialField: max_level < 2");
  if (alphas.size() != kBasisCount) {
    throw std::invalid_argument("RadialField: expected 33 coefficients");
  }
  if (alphas[0] != 1.0) {
    throw std::invalid_argument("RadialField: the average-basis coefficient must stay 1");
  }
  if (static_cast<int>(bases.size()) != kBasisCount) {
    throw std::invalid_argument("RadialField: expected 33 basis stacks");
  }
  for (const auto& stack : bases) {
    if (static_cast<int>(stack.size()) != levels()) {
      throw std::invalid_argument("RadialField: level stack must cover n=2..max_level");
    }
    for (int l = 0; l < levels(); ++l) {
      const int64_t side = level_side(kMinLevel + l);
      const Shape expect{side, side};
      if (stack[static_cast<size_t>(l)].shape() != expect) {
        throw std::invalid_argument("RadialField: level grid must be " +
                                    shape_to_string(expect));
      }
    }
  }
}

RadialField make_radial_field(int max_level, double mean_radius) {
  RadialField f;
  f.max_level = max_level;
  f.alphas = Tensor(Shape{RadialField::kBasisCount});
  f.alphas[0] = 1.0;
  const double per_level = mean_radius / f.levels();
  f.bases.resize(RadialField::kBasisCount);
  for (int i = 0; i < RadialField::kBasisCount; ++i) {
    for (int n = RadialField::kMinLevel; n <= max_level; ++n) {
      const int64_t side = RadialField::level_side(n);
      f.bases[static_cast<size_t>(i)].push_back(
          Tensor(Shape{side, side}, i == 0 ? per_level : 0.0));
    }
  }
  f.validate();
  return f;
}

RadialField random_radial_field(int max_level, Rng& rng, double mean_radius,
                                double basis_stddev, double alpha_stddev) {
  RadialField f = make_radial_field(max_level, mean_radius);
  for (int i = 0; i < RadialField::kBasisCount; ++i) {
    if (i > 0) f.alphas[i] = alpha_stddev * rng.normal();
    for (int l = 0; l < f.levels(); ++l) {
      Tensor& g = f.bases[static_cast<size_t>(i)][static_cast<size_t>(l)];
      if (i == 0) continue;  // keep the average stack deterministic
      for (int64_t k = 0; k < g.size(); ++k) g[k] = basis_stddev * rng.normal();
    }
  }
  return f;
}

Tensor upsample_bilinear(const Tensor& grid, int64_t target_side) {
  if (grid.rank() != 2 || grid.dim(0) != grid.dim(1)) {
    throw std::invalid_argument("upsample_bilinear: expected a square grid");
  }
  const int64_t src = grid.dim(0);
  if (!is_pow2_plus_one(src) || !is_pow2_plus_one(target_side)) {
    throw std::invalid_argument("upsample_bilinear: sides must be 2^k+1");
  }
  if (target_side < src) {
    throw std::invalid_argument("upsample_bilinear: target must not be smaller than source");
  }
  if (target_side == src) return grid;
  return upsample_map(src, target_side)->apply(grid);
}

Tensor compose_radial(const RadialField& field) {
  field.validate();
  const int64_t side = field.side();
  Tensor rho(Shape{side, side});
  for (int i = 0; i < RadialField::kBasisCount; ++i) {
    const double alpha = field.alphas[i];
    if (alpha == 0.0) continue;
    for (int l = 0; l < field.levels(); ++l) {
      const Tensor up =
          upsample_bilinear(field.bases[static_cast<size_t>(i)][static_cast<size_t>(l)], side);
      for (int64_t k = 0; k < rho.size(); ++k) rho[k] += alpha * up[k];
    }
  }
  return rho;
}

Var compose_radial_var(const Var& alphas, const std::vector<std::vector<Var>>& bases,
                       int max_level) {
  if (alphas.size() != RadialField::kBasisCount ||
      static_cast<int>(bases.size()) != RadialField::kBasisCount) {
    throw std::invalid_argument("compose_radial_var: expected 33 coefficients and bases");
  }
  const int64_t side = RadialField::level_side(max_level);
  const int64_t cells = side * side;
  // Row i of the stacked matrix is the fully upsampled level sum of basis i;
  // the composition is then a single [1,33] x [33,side^2] product, which
  // routes gradients to both the coefficients and the grids.
  std::vector<Var> rows;
  rows.reserve(RadialField::kBasisCount);
  for (int i = 0; i < RadialField::kBasisCount; ++i) {
    Var acc;
    for (int n = RadialField::kMinLevel; n <= max_level; ++n) {
      const Var& g = bases[static_cast<size_t>(i)][static_cast<size_t>(n - RadialField::kMinLevel)];
      Var up = (RadialField::level_side(n) == side)
                   ? g
                   : apply_map(g, upsample_map(RadialField::level_side(n), side));
      acc = acc.defined() ? add(acc, up) : up;
    }
    rows.push_back(reshape(acc, Shape{1, cells}));
  }
  Var basis_matrix = concat0(rows);                     // [33, side^2]
  Var coef_row = reshape(alphas, Shape{1, RadialField::kBasisCount});
  return reshape(matmul(coef_row, basis_matrix), Shape{side, side});
}

Tensor vertex_directions(const TessellationTopology& topo) {
  Tensor dirs(Shape{topo.vertex_count(), 3});
  for (int v = 0; v < topo.vertex_count(); ++v) {
    const double t = topo.theta[static_cast<size_t>(v)];
    const double p = topo.phi[static_cast<size_t>(v)];
    dirs[3 * v + 0] = std::sin(t) * std::cos(p);
    dirs[3 * v + 1] = std::sin(t) * std::sin(p);
    dirs[3 * v + 2] = std::cos(t);
  }
  return dirs;
}

SurfaceMesh spherical_to_cartesian(const Tensor& rho, TopologyPtr topology) {
  if (!topology) throw std::invalid_argument("spherical_to_cartesian: null topology");
  if (rho.size() != topology->vertex_count()) {
    throw std::invalid_argument("spherical_to_cartesian: radial map size mismatch");
  }
  if (rho.rank() == 2 &&
      (rho.dim(0) != topology->rows || rho.dim(1) != topology->cols)) {
    throw std::invalid_argument("spherical_to_cartesian: grid dimensions mismatch");
  }
  for (int64_t i = 0; i < rho.size(); ++i) {
    if (!(rho[i] > 0.0) || !std::isfinite(rho[i])) {
      throw std::invalid_argument("spherical_to_cartesian: radii must be positive and finite");
    }
  }
  SurfaceMesh mesh;
  mesh.topology = topology;
  Tensor dirs = vertex_directions(*topology);
  mesh.positions = Tensor(Shape{topology->vertex_count(), 3});
  for (int v = 0; v < topology->vertex_count(); ++v) {
    for (int k = 0; k < 3; ++k) mesh.positions[3 * v + k] = rho[v] * dirs[3 * v + k];
  }
  return mesh;
}

Var spherical_positions_var(const Var& rho_flat, const TessellationTopology& topo) {
  const int64_t v = topo.vertex_count();
  if (rho_flat.size() != v) {
    throw std::invalid_argument("spherical_positions_var: radial map size mismatch");
  }
  Var rho3 = apply_map(reshape(rho_flat, Shape{v}), make_repeat_cols_map(v, 3));
  return mul(rho3, constant(vertex_directions(topo)));
}

Tensor radial_distances(const SurfaceMesh& mesh) {
  const int v = mesh.vertex_count();
  Tensor out(Shape{v});
  for (int i = 0; i < v; ++i) {
    const double x = mesh.positions[3 * i], y = mesh.positions[3 * i + 1],
                 z = mesh.positions[3 * i + 2];
    out[i] = std::sqrt(x * x + y * y + z * z);
  }
  return out;
}

TriangleNormals triangle_normals(const SurfaceMesh& mesh, double area_eps) {
  const auto& tris = mesh.topology->triangles;
  TriangleNormals result;
  result.normals = Tensor(Shape{static_cast<int64_t>(tris.size()), 3});
  result.degenerate.assign(tris.size(), 0);
  for (size_t t = 0; t < tris.size(); ++t) {
    const auto& tri = tris[t];
    auto p = [&](int k) {
      const int vtx = tri[static_cast<size_t>(k)];
      return Vec3{mesh.positions[3 * vtx], mesh.positions[3 * vtx + 1],
                  mesh.positions[3 * vtx + 2]};
    };
    const Vec3 n = cross(p(1) - p(0), p(2) - p(0));
    const double len = norm(n);
    if (len <= 2.0 * area_eps) {  // len == twice the area
      result.degenerate[t] = 1;
      continue;
    }
    result.normals[3 * static_cast<int64_t>(t) + 0] = n.x / len;
    result.normals[3 * static_cast<int64_t>(t) + 1] = n.y / len;
    result.normals[3 * static_cast<int64_t>(t) + 2] = n.z / len;
  }
  return result;
}

std::pair<Tensor, double> enforce_scale_radial(const Tensor& rho, double max_radius) {
  if (max_radius <= 0.0) throw std::invalid_argument("enforce_scale: max_radius must be > 0");
  const double m = rho.max();
  if (m <= max_radius) return {rho, 1.0};
  const double factor = max_radius / m;
  Tensor out(rho.shape());
  for (int64_t i = 0; i < rho.size(); ++i) out[i] = rho[i] * factor;
  return {out, factor};
}

std::pair<SurfaceMesh, double> enforce_scale(const SurfaceMesh& mesh, double max_radius) {
  if (max_radius <= 0.0) throw std::invalid_argument("enforce_scale: max_radius must be > 0");
  const Tensor radii = radial_distances(mesh);
  const double m = radii.max();
  if (m <= max_radius) return {mesh, 1.0};
  const double factor = max_radius / m;
  SurfaceMesh out = mesh;
  for (int64_t i = 0; i < out.positions.size(); ++i) out.positions[i] *= factor;
  return {out, factor};
}

Var enforce_scale_var(const Var& rho_flat, double max_radius) {
  if (max_radius <= 0.0) throw std::invalid_argument("enforce_scale: max_radius must be > 0");
  Var m = max_all(rho_flat);
  if (m.value().item() <= max_radius) return rho_flat;
  Var factor = div(constant_scalar(max_radius), m);
  return mul(rho_flat, expand_scalar(factor, rho_flat.shape()));
}

}  // namespace starmesh
