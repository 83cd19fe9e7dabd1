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

#include "starmesh/camera.hpp"
#include "starmesh/tensor.hpp"
#include "starmesh/vec.hpp"

namespace starmesh {

// Texture on a sphere around the origin, imaged with a spherical image plane:
// a viewpoint change becomes a pure 2D shift of the sampling window, scaled
// down by angular_scale so the background behaves like a wider field of view.
struct BackgroundSphere {
  Tensor texture;              // [Hb, Wb, 3], values in [0,1]
  double angular_scale = 0.2;
  double pixels_per_radian = 64.0;  // from the camera serving this window
  int image_size = 32;              // rendered window side

  int height() const { return texture.empty() ? 0 : static_cast<int>(texture.dim(0)); }
  int width() const { return texture.empty() ? 0 : static_cast<int>(texture.dim(1)); }
};

// Smallest texture side that keeps every shift inside the distribution's
// support on-texture (image + 2*ceil(max shift) + 2).
int required_background_side(const CameraIntrinsics& K, const ViewpointDistribution& dist,
                             double angular_scale);

BackgroundSphere make_background(Tensor texture, double angular_scale,
                                 const CameraIntrinsics& K);

// (dx, dy) in pixels; linear in (yaw, pitch).
Vec2 background_shift(const Viewpoint& v, const BackgroundSphere& bg);

struct BackgroundSample {
  Vec3 color;
  // Bilinear footprint, for the renderer's backward pass.
  int64_t texel[4];  // flat indices into [Hb*Wb]
  double weight[4];
  Vec3 dcolor_dx, dcolor_dy;  // derivative w.r.t. the sampling coordinate
};

// Bilinear lookup at image pixel (px, py) (lattice-aligned: integer shifts
// reproduce texels exactly). Throws if the shifted window leaves the texture.
BackgroundSample sample_background_detail(double px, double py, const Viewpoint& v,
                                          const BackgroundSphere& bg);
Vec3 sample_background(double px, double py, const Viewpoint& v, const BackgroundSphere& bg);

}  // namespace starmesh
