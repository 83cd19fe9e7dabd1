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

#include <cstdint>
#include <span>
#include <vector>

#include "starmesh/autodiff.hpp"
#include "starmesh/background.hpp"
#include "starmesh/camera.hpp"
#include "starmesh/geometry.hpp"

namespace starmesh {

// The generator output bundle: object surface, per-vertex RGB in [0,1], and
// the spherical background.
struct SceneRepresentation {
  SurfaceMesh surface;
  Tensor texture;  // [V,3]
  BackgroundSphere background;
};

void validate_scene(const SceneRepresentation& scene);

// One rasterized sample covering a pixel. Coverage alpha is 1 strictly
// inside the triangle and ramps linearly to 0 across the blur band that
// extends the triangle outward; barycentrics in the band are those of the
// nearest point on the triangle, which also supplies the depth.
struct Fragment {
  int32_t tri = 0;
  // 0 inside; 1..3 nearest feature is edge (v0v1, v1v2, v2v0);
  // 4..6 nearest feature is vertex v0/v1/v2.
  int8_t kind = 0;
  double depth = 0;
  double alpha = 1;
  double b0 = 0, b1 = 0, b2 = 0;
  double t = 0;  // edge parameter for kind 1..3
};

struct FragmentList {
  int width = 0, height = 0;
  // CSR layout over row-major pixels; fragments per pixel are sorted
  // front-to-back.
  std::vector<int32_t> offsets;  // width*height + 1
  std::vector<Fragment> fragments;
  uint64_t fingerprint = 0;

  std::span<const Fragment> at(int x, int y) const {
    const size_t p = static_cast<size_t>(y) * width + x;
    return {fragments.data() + offsets[p], fragments.data() + offsets[p + 1]};
  }
};

struct RenderSettings {
  CameraIntrinsics camera;
  RotationOrder order = RotationOrder::kXY;
  double blur_width = 1.0;  // pixels
};

struct RasterizeResult {
  Tensor image;  // [H,W,3] in [0,1]
  FragmentList fragments;
};

// Adjoints co-structured with the scene (and viewpoint).
struct SceneGradients {
  Tensor d_positions;   // [V,3]
  Tensor d_texture;     // [V,3]
  Tensor d_background;  // [Hb,Wb,3]
  Tensor d_viewpoint;   // [3] = (pitch, yaw, roll)
};

// Forward pass. Per pixel the sorted fragments composite front-to-back:
//   color = sum_k alpha_k prod_{j<k}(1-alpha_j) c_k + prod_j(1-alpha_j) bg.
RasterizeResult rasterize(const SceneRepresentation& scene, const Viewpoint& v,
                          const RenderSettings& settings);

// Exact adjoint of the forward compositing. `fragments` must come from a
// rasterize() call with identical inputs (checked via fingerprint).
SceneGradients rasterize_backward(const SceneRepresentation& scene, const Viewpoint& v,
                                  const RenderSettings& settings, const FragmentList& fragments,
                                  const Tensor& upstream);

uint64_t scene_fingerprint(const SceneRepresentation& scene, const Viewpoint& v,
                           const RenderSettings& settings);

// Graph node over (positions [V,3], colors [V,3], background [Hb,Wb,3],
// viewpoint [3]); output [H,W,3]. Backward runs rasterize_backward.
Var render_scene_var(const Var& positions, const Var& colors, const Var& bg_texture,
                     const Var& viewpoint, TopologyPtr topology, double angular_scale,
                     const RenderSettings& settings);

struct RenderJob {
  Var positions;
  Var colors;
  Var background;
  Var viewpoint;  // [3]
};

// Renders all jobs into one [N,H,W,3] output; forward and backward run the
// per-sample work in parallel over `threads`.
Var render_batch_var(const std::vector<RenderJob>& jobs, TopologyPtr topology,
                     double angular_scale, const RenderSettings& settings, int threads = 1);

}  // namespace starmesh
