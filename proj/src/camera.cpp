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

#include "starmesh/camera.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace starmesh {

namespace {

constexpr double kMinProjectiveDenominator = 1e-9;

Mat3 rot_x(double a) {
  Mat3 r = Mat3::identity();
  const double c = std::cos(a), s = std::sin(a);
  r(1, 1) = c;
  r(1, 2) = -s;
  r(2, 1) = s;
  r(2, 2) = c;
  return r;
}

Mat3 rot_y(double a) {
  Mat3 r = Mat3::identity();
  const double c = std::cos(a), s = std::sin(a);
  r(0, 0) = c;
  r(0, 2) = s;
  r(2, 0) = -s;
  r(2, 2) = c;
  return r;
}

Mat3 rot_z(double a) {
  Mat3 r = Mat3::identity();
  const double c = std::cos(a), s = std::sin(a);
  r(0, 0) = c;
  r(0, 1) = -s;
  r(1, 0) = s;
  r(1, 1) = c;
  return r;
}

Mat3 drot_x(double a) {
  Mat3 r;
  const double c = std::cos(a), s = std::sin(a);
  r(1, 1) = -s;
  r(1, 2) = -c;
  r(2, 1) = c;
  r(2, 2) = -s;
  return r;
}

Mat3 drot_y(double a) {
  Mat3 r;
  const double c = std::cos(a), s = std::sin(a);
  r(0, 0) = -s;
  r(0, 2) = c;
  r(2, 0) = -c;
  r(2, 2) = -s;
  return r;
}

Mat3 drot_z(double a) {
  Mat3 r;
  const double c = std::cos(a), s = std::sin(a);
  r(0, 0) = -s;
  r(0, 1) = -c;
  r(1, 0) = c;
  r(1, 1) = -s;
  return r;
}

}  // namespace

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

bool ViewpointDistribution::contains(const Viewpoint& v, double tol_rad) const {
  return std::abs(v.pitch) <= deg_to_rad(pitch_range_deg) + tol_rad &&
         std::abs(v.yaw) <= deg_to_rad(yaw_range_deg) + tol_rad &&
         std::abs(v.roll) <= deg_to_rad(roll_range_deg) + tol_rad;
}

Viewpoint ViewpointDistribution::clamp(const Viewpoint& v) const {
  auto clamp1 = [](double x, double r) { return x < -r ? -r : (x > r ? r : x); };
  return Viewpoint{clamp1(v.pitch, deg_to_rad(pitch_range_deg)),
                   clamp1(v.yaw, deg_to_rad(yaw_range_deg)),
                   clamp1(v.roll, deg_to_rad(roll_range_deg))};
}

Mat3 rotation_matrix(const Viewpoint& v, RotationOrder order) {
  if (order == RotationOrder::kXY) {
    return rot_z(v.roll) * (rot_x(v.pitch) * rot_y(v.yaw));
  }
  return rot_z(v.roll) * (rot_y(v.yaw) * rot_x(v.pitch));
}

std::array<Mat3, 3> rotation_matrix_derivatives(const Viewpoint& v, RotationOrder order) {
  const Mat3 rx = rot_x(v.pitch), ry = rot_y(v.yaw), rz = rot_z(v.roll);
  const Mat3 dx = drot_x(v.pitch), dy = drot_y(v.yaw), dz = drot_z(v.roll);
  if (order == RotationOrder::kXY) {
    return {rz * (dx * ry), rz * (rx * dy), dz * (rx * ry)};
  }
  return {rz * (ry * dx), rz * (dy * rx), dz * (ry * rx)};
}

ProjectedPoint project_point(const Vec3& p, const Mat3& rotation, const CameraIntrinsics& K) {
  const Vec3 pc = rotation * p;
  const double denom = K.focal - pc.z;
  ProjectedPoint out;
  out.depth = denom;
  out.renderable = denom > kMinProjectiveDenominator;
  if (!out.renderable) return out;
  const double ppu = K.pixels_per_unit();
  out.x = K.principal() + ppu * K.focal * pc.x / denom;
  out.y = K.principal() - ppu * K.focal * pc.y / denom;
  return out;
}

Tensor project(const Tensor& points, const Viewpoint& v, RotationOrder order,
               const CameraIntrinsics& K, std::vector<uint8_t>* renderable) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw std::invalid_argument("project: expected [N,3] points");
  }
  if (!points.all_finite()) throw std::invalid_argument("project: non-finite points");
  const Mat3 rot = rotation_matrix(v, order);
  const int64_t n = points.dim(0);
  Tensor out(Shape{n, 3});
  if (renderable) renderable->assign(static_cast<size_t>(n), 1);
  for (int64_t i = 0; i < n; ++i) {
    const Vec3 p{points[3 * i], points[3 * i + 1], points[3 * i + 2]};
    const ProjectedPoint q = project_point(p, rot, K);
    out[3 * i] = q.x;
    out[3 * i + 1] = q.y;
    out[3 * i + 2] = q.depth;
    if (renderable) (*renderable)[static_cast<size_t>(i)] = q.renderable ? 1 : 0;
  }
  return out;
}

Viewpoint sample_viewpoint(const ViewpointDistribution& dist, Rng& rng) {
  // Draw order is pinned (pitch, yaw, roll) so seeded streams reproduce.
  Viewpoint v;
  const double p = deg_to_rad(dist.pitch_range_deg);
  const double y = deg_to_rad(dist.yaw_range_deg);
  const double r = deg_to_rad(dist.roll_range_deg);
  v.pitch = p > 0 ? rng.uniform(-p, p) : 0.0;
  v.yaw = y > 0 ? rng.uniform(-y, y) : 0.0;
  v.roll = r > 0 ? rng.uniform(-r, r) : 0.0;
  return v;
}

}  // namespace starmesh
