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

#include "starmesh/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace starmesh {

namespace {

TopologyPtr make_soup_topology(int triangle_count) {
  auto topo = std::make_shared<TessellationTopology>();
  topo->rows = 1;
  topo->cols = 3 * triangle_count;
  topo->theta.assign(static_cast<size_t>(3 * triangle_count), 0.0);
  topo->phi.assign(static_cast<size_t>(3 * triangle_count), 0.0);
  for (int t = 0; t < triangle_count; ++t) {
    topo->triangles.push_back({3 * t, 3 * t + 1, 3 * t + 2});
  }
  return topo;
}

Tensor smooth_random_texture(int side, Rng& rng) {
  // Few low-frequency cosine terms per channel, squashed into [0.1, 0.9].
  Tensor tex(Shape{side, side, 3});
  for (int c = 0; c < 3; ++c) {
    double ax[3], ay[3], ph[3], amp[3];
    for (int k = 0; k < 3; ++k) {
      ax[k] = rng.uniform(0.5, 2.5);
      ay[k] = rng.uniform(0.5, 2.5);
      ph[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      amp[k] = rng.uniform(0.1, 0.35);
    }
    for (int i = 0; i < side; ++i) {
      for (int j = 0; j < side; ++j) {
        double v = 0.5;
        for (int k = 0; k < 3; ++k) {
          v += amp[k] * std::cos(ax[k] * (2.0 * std::numbers::pi * i / side) +
                                 ay[k] * (2.0 * std::numbers::pi * j / side) + ph[k]);
        }
        tex.at(i, j, c) = std::clamp(v, 0.1, 0.9);
      }
    }
  }
  return tex;
}

double weighted_loss(const Tensor& image, const Tensor& weights) {
  double s = 0;
  for (int64_t i = 0; i < image.size(); ++i) s += image[i] * weights[i];
  return s;
}

double rel_error(double a, double fd, double floor) {
  const double denom = std::max({std::abs(a), std::abs(fd), floor});
  return std::abs(a - fd) / denom;
}

// Pixels where object coverage crosses 0.5 against a 4-neighbor.
std::vector<uint8_t> coverage_boundary(const FragmentList& frags) {
  const int w = frags.width, h = frags.height;
  std::vector<double> cov(static_cast<size_t>(w) * h, 0.0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double transmittance = 1.0;
      for (const Fragment& f : frags.at(j, i)) transmittance *= (1.0 - f.alpha);
      cov[static_cast<size_t>(i) * w + j] = 1.0 - transmittance;
    }
  }
  std::vector<uint8_t> boundary(cov.size(), 0);
  auto covered = [&](int x, int y) { return cov[static_cast<size_t>(y) * w + x] > 0.5; };
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const bool c = covered(j, i);
      const bool edge = (j > 0 && covered(j - 1, i) != c) || (j + 1 < w && covered(j + 1, i) != c) ||
                        (i > 0 && covered(j, i - 1) != c) || (i + 1 < h && covered(j, i + 1) != c);
      if (edge) boundary[static_cast<size_t>(i) * w + j] = 1;
    }
  }
  return boundary;
}

}  // namespace

bool GradcheckReport::all_below(double threshold) const {
  for (const auto& s : slots) {
    if (s.entries > 0 && s.max_rel_error >= threshold) return false;
  }
  return true;
}

double GradcheckReport::slot_error(const std::string& name) const {
  for (const auto& s : slots) {
    if (s.name == name) return s.max_rel_error;
  }
  return -1.0;
}

GradcheckScene make_gradcheck_scene(uint64_t seed, int triangle_count, int image_size,
                                    double blur_width) {
  Rng rng(seed);
  GradcheckScene out;
  out.settings.camera.image_size = image_size;
  out.settings.blur_width = blur_width;

  TopologyPtr topo = make_soup_topology(triangle_count);
  Tensor positions(Shape{3 * triangle_count, 3});
  Tensor texture(Shape{3 * triangle_count, 3});
  for (int t = 0; t < triangle_count; ++t) {
    const double cx = rng.uniform(-0.8, 0.8);
    const double cy = rng.uniform(-0.8, 0.8);
    const double cz = rng.uniform(-0.5, 0.5);
    for (int k = 0; k < 3; ++k) {
      const int v = 3 * t + k;
      positions[3 * v + 0] = cx + rng.uniform(-0.3, 0.3);
      positions[3 * v + 1] = cy + rng.uniform(-0.3, 0.3);
      positions[3 * v + 2] = cz + rng.uniform(-0.15, 0.15);
      for (int c = 0; c < 3; ++c) texture[3 * v + c] = rng.uniform(0.05, 0.95);
    }
  }
  out.scene.surface.topology = topo;
  out.scene.surface.positions = std::move(positions);
  out.scene.texture = std::move(texture);

  ViewpointDistribution dist;
  dist.pitch_range_deg = 20;
  dist.yaw_range_deg = 20;
  const int bg_side = required_background_side(out.settings.camera, dist, 0.2);
  out.scene.background =
      make_background(smooth_random_texture(bg_side, rng), 0.2, out.settings.camera);
  out.view = sample_viewpoint(dist, rng);
  return out;
}

GradcheckReport gradcheck(const SceneRepresentation& scene, const Viewpoint& v,
                          const RenderSettings& settings, const GradcheckOptions& opts) {
  Rng rng(opts.seed ^ 0x5eedf00dULL);
  const int W = settings.camera.image_size;
  Tensor weights(Shape{W, W, 3});
  for (int64_t i = 0; i < weights.size(); ++i) weights[i] = rng.uniform(0.25, 1.0);

  RasterizeResult forward = rasterize(scene, v, settings);
  SceneGradients analytic = rasterize_backward(scene, v, settings, forward.fragments, weights);

  GradcheckReport report;
  auto run_slot = [&](const std::string& name, const Tensor& analytic_slot,
                      const std::vector<int64_t>& entries, double step,
                      const std::function<double(int64_t, double)>& loss_at) {
    GradcheckSlot slot;
    slot.name = name;
    const double floor = std::max(1e-4 * analytic_slot.abs_max(), 1e-12);
    for (int64_t e : entries) {
      const double lp = loss_at(e, step);
      const double lm = loss_at(e, -step);
      const double fd = (lp - lm) / (2.0 * step);
      slot.max_rel_error = std::max(slot.max_rel_error, rel_error(analytic_slot[e], fd, floor));
      slot.entries++;
    }
    report.slots.push_back(slot);
    report.max_rel_error = std::max(report.max_rel_error, slot.max_rel_error);
  };

  const int vcount = scene.surface.vertex_count();

  // Positions: random coordinates plus a silhouette-targeted subset.
  {
    auto loss_at = [&](int64_t e, double delta) {
      SceneRepresentation probe = scene;
      probe.surface.positions[e] += delta;
      return weighted_loss(rasterize(probe, v, settings).image, weights);
    };
    std::vector<int64_t> entries;
    for (int k = 0; k < opts.samples_per_slot; ++k) {
      entries.push_back(rng.uniform_int(static_cast<int64_t>(vcount) * 3));
    }
    run_slot("positions", analytic.d_positions, entries, opts.step_positions, loss_at);

    // Vertices projected near the coverage boundary.
    const auto boundary = coverage_boundary(forward.fragments);
    std::vector<uint8_t> renderable;
    Tensor projected = project(scene.surface.positions, v, settings.order, settings.camera,
                               &renderable);
    std::vector<int> silhouette_verts;
    for (int vi = 0; vi < vcount; ++vi) {
      if (!renderable[static_cast<size_t>(vi)]) continue;
      const int px = static_cast<int>(std::floor(projected[3 * vi]));
      const int py = static_cast<int>(std::floor(projected[3 * vi + 1]));
      bool near_boundary = false;
      const int radius = static_cast<int>(std::ceil(settings.blur_width)) + 1;
      for (int dy = -radius; dy <= radius && !near_boundary; ++dy) {
        for (int dx = -radius; dx <= radius && !near_boundary; ++dx) {
          const int x = px + dx, y = py + dy;
          if (x >= 0 && x < W && y >= 0 && y < W &&
              boundary[static_cast<size_t>(y) * W + x]) {
            near_boundary = true;
          }
        }
      }
      if (near_boundary) silhouette_verts.push_back(vi);
    }
    std::vector<int64_t> sil_entries;
    if (!silhouette_verts.empty()) {
      for (int k = 0; k < opts.silhouette_samples; ++k) {
        const int vi = silhouette_verts[static_cast<size_t>(
            rng.uniform_int(static_cast<int64_t>(silhouette_verts.size())))];
        sil_entries.push_back(3 * vi + rng.uniform_int(2));  // x or y: screen-visible motion
      }
    }
    // At blur 0 the ramp is gone: a half-pixel step exposes the jump that the
    // analytic (zero) boundary gradient cannot represent.
    const double sil_step =
        settings.blur_width > 0 ? opts.step_positions
                                : 0.5 / settings.camera.pixels_per_unit();
    run_slot("silhouette_positions", analytic.d_positions, sil_entries, sil_step, loss_at);
  }

  // Colors.
  {
    auto loss_at = [&](int64_t e, double delta) {
      SceneRepresentation probe = scene;
      probe.texture[e] += delta;
      return weighted_loss(rasterize(probe, v, settings).image, weights);
    };
    std::vector<int64_t> entries;
    for (int k = 0; k < opts.samples_per_slot; ++k) {
      entries.push_back(rng.uniform_int(static_cast<int64_t>(vcount) * 3));
    }
    run_slot("colors", analytic.d_texture, entries, opts.step_colors, loss_at);
  }

  // Background: sample within the visible window so entries are informative.
  {
    auto loss_at = [&](int64_t e, double delta) {
      SceneRepresentation probe = scene;
      probe.background.texture[e] += delta;
      return weighted_loss(rasterize(probe, v, settings).image, weights);
    };
    const int bh = scene.background.height(), bw = scene.background.width();
    const int off_y = (bh - W) / 2, off_x = (bw - W) / 2;
    std::vector<int64_t> entries;
    for (int k = 0; k < opts.samples_per_slot; ++k) {
      const int64_t i = off_y + rng.uniform_int(W);
      const int64_t j = off_x + rng.uniform_int(W);
      entries.push_back((i * bw + j) * 3 + rng.uniform_int(3));
    }
    run_slot("background", analytic.d_background, entries, opts.step_background, loss_at);
  }

  // Viewpoint.
  {
    auto loss_at = [&](int64_t e, double delta) {
      Viewpoint probe = v;
      if (e == 0) probe.pitch += delta;
      else if (e == 1) probe.yaw += delta;
      else probe.roll += delta;
      return weighted_loss(rasterize(scene, probe, settings).image, weights);
    };
    std::vector<int64_t> entries{0, 1, 2};
    run_slot("viewpoint", analytic.d_viewpoint, entries, opts.step_viewpoint, loss_at);
  }

  return report;
}

GradcheckReport gradcheck_random(const GradcheckOptions& opts) {
  GradcheckScene s =
      make_gradcheck_scene(opts.seed, opts.triangle_count, opts.image_size, opts.blur_width);
  return gradcheck(s.scene, s.view, s.settings, opts);
}

}  // namespace starmesh
