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

#include "starmesh/background.hpp"

#include <cmath>
#include <stdexcept>

namespace starmesh {

int required_background_side(const CameraIntrinsics& K, const ViewpointDistribution& dist,
                             double angular_scale) {
  const double max_angle =
      std::max(deg_to_rad(dist.yaw_range_deg), deg_to_rad(dist.pitch_range_deg));
  const double max_shift = angular_scale * max_angle * K.pixels_per_radian();
  return K.image_size + 2 * static_cast<int>(std::ceil(max_shift)) + 2;
}

BackgroundSphere make_background(Tensor texture, double angular_scale,
                                 const CameraIntrinsics& K) {
  if (texture.rank() != 3 || texture.dim(2) != 3) {
    throw std::invalid_argument("make_background: expected [H,W,3] texture");
  }
  if (texture.dim(0) <= K.image_size || texture.dim(1) <= K.image_size) {
    throw std::invalid_argument(
        "make_background: texture must be strictly larger than the image");
  }
  BackgroundSphere bg;
  bg.texture = std::move(texture);
  bg.angular_scale = angular_scale;
  bg.pixels_per_radian = K.pixels_per_radian();
  bg.image_size = K.image_size;
  return bg;
}

Vec2 background_shift(const Viewpoint& v, const BackgroundSphere& bg) {
  const double s = bg.angular_scale * bg.pixels_per_radian;
  return Vec2{s * v.yaw, s * v.pitch};
}

BackgroundSample sample_background_detail(double px, double py, const Viewpoint& v,
                                          const BackgroundSphere& bg) {
  const Vec2 shift = background_shift(v, bg);
  const double off_x = (bg.width() - bg.image_size) / 2.0;
  const double off_y = (bg.height() - bg.image_size) / 2.0;
  const double tx = px + shift.x + off_x;
  const double ty = py + shift.y + off_y;
  const int w = bg.width(), h = bg.height();
  if (tx < 0.0 || ty < 0.0 || tx > w - 1.0 || ty > h - 1.0) {
    throw std::runtime_error("sample_background: shift left the texture window");
  }
  int64_t x0 = static_cast<int64_t>(std::floor(tx));
  int64_t y0 = static_cast<int64_t>(std::floor(ty));
  x0 = std::min<int64_t>(x0, w - 2);
  y0 = std::min<int64_t>(y0, h - 2);
  const double fx = tx - static_cast<double>(x0);
  const double fy = ty - static_cast<double>(y0);

  BackgroundSample s;
  s.texel[0] = y0 * w + x0;
  s.texel[1] = y0 * w + (x0 + 1);
  s.texel[2] = (y0 + 1) * w + x0;
  s.texel[3] = (y0 + 1) * w + (x0 + 1);
  s.weight[0] = (1 - fy) * (1 - fx);
  s.weight[1] = (1 - fy) * fx;
  s.weight[2] = fy * (1 - fx);
  s.weight[3] = fy * fx;

  const double* t = bg.texture.data();
  auto texel = [&](int k, int c) { return t[3 * s.texel[k] + c]; };
  for (int c = 0; c < 3; ++c) {
    const double c00 = texel(0, c), c01 = texel(1, c), c10 = texel(2, c), c11 = texel(3, c);
    const double val = s.weight[0] * c00 + s.weight[1] * c01 + s.weight[2] * c10 +
                       s.weight[3] * c11;
    const double dx = (1 - fy) * (c01 - c00) + fy * (c11 - c10);
    const double dy = (1 - fx) * (c10 - c00) + fx * (c11 - c01);
    if (c == 0) {
      s.color.x = val;
      s.dcolor_dx.x = dx;
      s.dcolor_dy.x = dy;
    } else if (c == 1) {
      s.color.y = val;
      s.dcolor_dx.y = dx;
      s.dcolor_dy.y = dy;
    } else {
      s.color.z = val;
      s.dcolor_dx.z = dx;
      s.dcolor_dy.z = dy;
    }
  }
  return s;
}

Vec3 sample_background(double px, double py, const Viewpoint& v, const BackgroundSphere& bg) {
  return sample_background_detail(px, py, v, bg).color;
}

}  // namespace starmesh
