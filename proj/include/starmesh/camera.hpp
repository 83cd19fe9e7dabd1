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

#include "starmesh/rng.hpp"
#include "starmesh/tensor.hpp"
#include "starmesh/vec.hpp"

namespace starmesh {

// Axis conventions, pinned once for the whole project:
//   theta is measured from +z; the camera sits at (0, 0, focal) looking down
//   -z with its image plane on z = 0, and viewpoint changes rotate the scene
//   by R(v) (equivalent to rotating the camera by the inverse).
//   Screen x grows right with world +x, screen y grows down with world -y.

struct Viewpoint {
  double pitch = 0;  // about x, radians
  double yaw = 0;    // about y, radians
  double roll = 0;   // about the camera axis (z), radians
};

enum class RotationOrder { kXY, kYX };

struct CameraIntrinsics {
  double focal = 6.0;       // scene units from image plane to camera center
  int image_size = 32;      // square, pixels
  double half_extent = 1.5; // scene units spanned by half the image at z=0

  double principal() const { return image_size / 2.0; }
  double pixels_per_unit() const { return image_size / (2.0 * half_extent); }
  double pixels_per_radian() const { return focal * pixels_per_unit(); }
};

// Uniform, symmetric per-angle ranges (the paper-style +/- bounds), stored
// in degrees with the rotation-order flag.
struct ViewpointDistribution {
  double pitch_range_deg = 15.0;
  double yaw_range_deg = 65.0;
  double roll_range_deg = 0.0;
  RotationOrder order = RotationOrder::kXY;

  bool contains(const Viewpoint& v, double tol_rad = 1e-12) const;
  Viewpoint clamp(const Viewpoint& v) const;
  Viewpoint center() const { return Viewpoint{}; }
};

double deg_to_rad(double deg);
double rad_to_deg(double rad);

// kXY: R = Rz(roll) * Rx(pitch) * Ry(yaw); kYX swaps the last two.
Mat3 rotation_matrix(const Viewpoint& v, RotationOrder order);
// Partial derivatives of R w.r.t. (pitch, yaw, roll).
std::array<Mat3, 3> rotation_matrix_derivatives(const Viewpoint& v, RotationOrder order);

struct ProjectedPoint {
  double x = 0, y = 0;   // pixels
  double depth = 0;      // camera-space distance, focal - z_cam
  bool renderable = true;
};

ProjectedPoint project_point(const Vec3& p, const Mat3& rotation, const CameraIntrinsics& K);

// Batch wrapper over [N,3] world points; output [N,3] = (x, y, depth).
// Points with projective denominator <= eps are flagged non-renderable.
Tensor project(const Tensor& points, const Viewpoint& v, RotationOrder order,
               const CameraIntrinsics& K, std::vector<uint8_t>* renderable = nullptr);

Viewpoint sample_viewpoint(const ViewpointDistribution& dist, Rng& rng);

}  // namespace starmesh
