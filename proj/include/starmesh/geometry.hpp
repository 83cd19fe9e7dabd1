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

#include <array>
#include <memory>
#include <utility>
#include <vector>

#include "starmesh/autodiff.hpp"
#include "starmesh/rng.hpp"
#include "starmesh/tensor.hpp"

namespace starmesh {

// Uniform sphere tessellation: rows x cols vertex grid over
// theta in [0, pi] (from +z) x phi in [0, 2*pi), azimuth wrapping at the
// seam. The triangle list is fixed once built.
struct TessellationTopology {
  int rows = 0, cols = 0;
  std::vector<std::array<int, 3>> triangles;
  std::vector<double> theta, phi;  // per vertex, radians

  int vertex_count() const { return rows * cols; }
  int vertex_index(int i, int j) const { return i * cols + j; }
};

using TopologyPtr = std::shared_ptr<const TessellationTopology>;

// rows >= 2, cols >= 3. 2*(rows-1)*cols triangles with consistent outward
// winding for radial surfaces.
TessellationTopology build_tessellation(int rows, int cols);
TopologyPtr shared_tessellation(int rows, int cols);

// Unordered pairs of edge-adjacent triangles, each pair once.
std::vector<std::pair<int, int>> triangle_adjacency(const TessellationTopology& topo);

// Hierarchical radial-distance parametrization: 32+1 bases, each a stack of
// square grids at sides 2^n+1 for n in [2, max_level]; the composed map has
// side 2^max_level+1. Index 0 is the average-distance basis and its
// coefficient stays pinned at 1.
struct RadialField {
  static constexpr int kBasisCount = 33;
  static constexpr int kMinLevel = 2;

  int max_level = 6;
  Tensor alphas;                            // [33], alphas[0] == 1
  std::vector<std::vector<Tensor>> bases;   // [33][levels]

  int levels() const { return max_level - kMinLevel + 1; }
  int side() const { return (1 << max_level) + 1; }
  static int level_side(int n) { return (1 << n) + 1; }

  void validate() const;  // throws on any shape-rule violation
};

// All-zero learned bases; the average stack composes to mean_radius.
RadialField make_radial_field(int max_level, double mean_radius = 0.5);
// Average stack at mean_radius, learned bases N(0, stddev^2), alphas
// N(0,1) except the pinned average.
RadialField random_radial_field(int max_level, Rng& rng, double mean_radius = 0.5,
                                double basis_stddev = 0.01, double alpha_stddev = 1.0);

// Bilinear upsampling between dyadic-plus-one grids; exact at coincident
// lattice nodes. Rejects sides that are not 2^k+1 and target < source.
Tensor upsample_bilinear(const Tensor& grid, int64_t target_side);
// Memoized sparse map behind upsample_bilinear (hot inside generators).
LinearMapPtr upsample_map(int64_t src_side, int64_t dst_side);

// rho = sum_i alpha_i * sum_n upsample_n(basis_{i,n}) as a [side,side] map.
Tensor compose_radial(const RadialField& field);
// Differentiable composition; `alphas` is [33] (entry 0 typically a pinned
// constant 1 concatenated in by the caller), `bases` mirrors
// RadialField::bases as Vars.
Var compose_radial_var(const Var& alphas, const std::vector<std::vector<Var>>& bases,
                       int max_level);

struct SurfaceMesh {
  TopologyPtr topology;
  Tensor positions;  // [V,3]

  int vertex_count() const { return topology ? topology->vertex_count() : 0; }
};

// positions = rho * (sin t cos p, sin t sin p, cos t); rho must be strictly
// positive and finite, with grid dimensions matching the topology.
SurfaceMesh spherical_to_cartesian(const Tensor& rho, TopologyPtr topology);
// Differentiable variant over a flattened [V] radial map.
Var spherical_positions_var(const Var& rho_flat, const TessellationTopology& topo);

// Per-vertex radial distances of a mesh (vertex norms).
Tensor radial_distances(const SurfaceMesh& mesh);

struct TriangleNormals {
  Tensor normals;                  // [T,3]; zero rows where degenerate
  std::vector<uint8_t> degenerate; // area <= eps, excluded from smoothing sums
};
TriangleNormals triangle_normals(const SurfaceMesh& mesh, double area_eps = 1e-12);

// Uniformly rescales so the maximal radial distance is max_radius when it
// exceeds it; identity otherwise. Returns the applied factor.
std::pair<Tensor, double> enforce_scale_radial(const Tensor& rho, double max_radius);
std::pair<SurfaceMesh, double> enforce_scale(const SurfaceMesh& mesh, double max_radius);
// Differentiable version (gradient flows through the max).
Var enforce_scale_var(const Var& rho_flat, double max_radius);

// Unit radial directions for a topology as a [V,3] tensor.
Tensor vertex_directions(const TessellationTopology& topo);

}  // namespace starmesh
