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
#include <stdexcept>

#include "starmesh/gradcheck.hpp"
#include "starmesh/renderer.hpp"

using namespace starmesh;

namespace {

TopologyPtr soup_topology(int triangle_count) {
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

SceneRepresentation simple_scene(int triangle_count, const CameraIntrinsics& k,
                                 double bg_value = 0.2) {
  SceneRepresentation scene;
  scene.surface.topology = soup_topology(triangle_count);
  scene.surface.positions = Tensor(Shape{3 * triangle_count, 3});
  scene.texture = Tensor(Shape{3 * triangle_count, 3}, 0.5);
  scene.background = make_background(Tensor(Shape{k.image_size + 16, k.image_size + 16, 3},
                                            bg_value),
                                     0.2, k);
  return scene;
}

// Big triangle covering the whole view, at a given scene depth.
void set_cover_triangle(SceneRepresentation& scene, int index, double z, double r, double g,
                        double b) {
  const int v0 = 3 * index;
  const double pos[9] = {-3, -3, z, 3, -3, z, 0, 5, z};
  for (int k = 0; k < 9; ++k) scene.surface.positions[3 * v0 + k] = pos[k];
  for (int k = 0; k < 3; ++k) {
    scene.texture[3 * (v0 + k) + 0] = r;
    scene.texture[3 * (v0 + k) + 1] = g;
    scene.texture[3 * (v0 + k) + 2] = b;
  }
}

// Painter's algorithm oracle: per pixel, nearest covering triangle wins,
// computed with its own barycentric code path; no blur model.
Tensor painter_oracle(const SceneRepresentation& scene, const Viewpoint& v,
                      const RenderSettings& settings) {
  const CameraIntrinsics& k = settings.camera;
  const int w = k.image_size;
  std::vector<uint8_t> ok;
  Tensor proj = project(scene.surface.positions, v, settings.order, k, &ok);
  Tensor img(Shape{w, w, 3});
  for (int i = 0; i < w; ++i) {
    for (int j = 0; j < w; ++j) {
      double best_depth = 0;
      bool found = false;
      double color[3] = {0, 0, 0};
      for (size_t t = 0; t < scene.surface.topology->triangles.size(); ++t) {
        const auto& tri = scene.surface.topology->triangles[t];
        if (!ok[static_cast<size_t>(tri[0])] || !ok[static_cast<size_t>(tri[1])] ||
            !ok[static_cast<size_t>(tri[2])]) {
          continue;
        }
        const double x0 = proj[3 * tri[0]], y0 = proj[3 * tri[0] + 1], d0 = proj[3 * tri[0] + 2];
        const double x1 = proj[3 * tri[1]], y1 = proj[3 * tri[1] + 1], d1 = proj[3 * tri[1] + 2];
        const double x2 = proj[3 * tri[2]], y2 = proj[3 * tri[2] + 1], d2 = proj[3 * tri[2] + 2];
        const double px = j + 0.5, py = i + 0.5;
        const double area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0);
        if (std::abs(area) < 1e-9) continue;
        const double w0 = ((x1 - px) * (y2 - py) - (y1 - py) * (x2 - px)) / area;
        const double w1 = ((x2 - px) * (y0 - py) - (y2 - py) * (x0 - px)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double depth = w0 * d0 + w1 * d1 + w2 * d2;
        if (!found || depth < best_depth) {
          found = true;
          best_depth = depth;
          for (int c = 0; c < 3; ++c) {
            color[c] = w0 * scene.texture[3 * tri[0] + c] + w1 * scene.texture[3 * tri[1] + c] +
                       w2 * scene.texture[3 * tri[2] + c];
          }
        }
      }
      if (!found) {
        const Vec3 bg = sample_background(j, i, v, scene.background);
        color[0] = bg.x;
        color[1] = bg.y;
        color[2] = bg.z;
      }
      for (int c = 0; c < 3; ++c) img.at(i, j, c) = color[c];
    }
  }
  return img;
}

}  // namespace

TEST_CASE("a fully covering constant triangle paints its color") {
  CameraIntrinsics k;
  k.image_size = 16;
  SceneRepresentation scene = simple_scene(1, k);
  set_cover_triangle(scene, 0, 0.0, 0.9, 0.3, 0.1);
  RenderSettings settings{k, RotationOrder::kXY, 1.0};
  const Tensor img = rasterize(scene, Viewpoint{}, settings).image;
  for (int i = 4; i < 12; ++i) {
    for (int j = 4; j < 12; ++j) {
      CHECK(img.at(i, j, 0) == doctest::Approx(0.9));
      CHECK(img.at(i, j, 1) == doctest::Approx(0.3));
      CHECK(img.at(i, j, 2) == doctest::Approx(0.1));
    }
  }
}

TEST_CASE("empty scene renders exactly the shifted background") {
  CameraIntrinsics k;
  k.image_size = 16;
  SceneRepresentation scene;
  Rng rng(3);
  scene.background = make_background(rng.uniform_tensor({40, 40, 3}, 0, 1), 0.2, k);
  RenderSettings settings{k, RotationOrder::kXY, 1.0};
  Viewpoint v{0.1, -0.4, 0};
  const Tensor img = rasterize(scene, v, settings).image;
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) {
      const Vec3 bg = sample_background(j, i, v, scene.background);
      CHECK(img.at(i, j, 0) == bg.x);
      CHECK(img.at(i, j, 1) == bg.y);
      CHECK(img.at(i, j, 2) == bg.z);
    }
  }
}

TEST_CASE("two overlapping opaque triangles follow depth order") {
  CameraIntrinsics k;
  k.image_size = 16;
  SceneRepresentation scene = simple_scene(2, k);
  set_cover_triangle(scene, 0, 0.5, 1.0, 0.0, 0.0);   // nearer (depth = f - z smaller)
  set_cover_triangle(scene, 1, -0.5, 0.0, 0.0, 1.0);  // farther
  RenderSettings settings{k, RotationOrder::kXY, 1.0};
  const Tensor img = rasterize(scene, Viewpoint{}, settings).image;
  CHECK(img.at(8, 8, 0) == doctest::Approx(1.0));
  CHECK(img.at(8, 8, 2) == doctest::Approx(0.0));
}

TEST_CASE("random scenes match the painter oracle exactly outside blur bands") {
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    GradcheckScene gc = make_gradcheck_scene(seed, 24, 16, 1.0);
    const RasterizeResult r = rasterize(gc.scene, gc.view, gc.settings);
    const Tensor oracle = painter_oracle(gc.scene, gc.view, gc.settings);
    int compared = 0;
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) {
        // Outside the blur bands: every fragment is fully opaque.
        bool banded = false;
        for (const Fragment& f : r.fragments.at(j, i)) {
          if (f.alpha < 1.0) banded = true;
        }
        if (banded) continue;
        ++compared;
        for (int c = 0; c < 3; ++c) {
          CHECK(std::abs(r.image.at(i, j, c) - oracle.at(i, j, c)) <= 1e-12);
        }
      }
    }
    CHECK(compared > 50);
  }
}

TEST_CASE("compositing weights and residual transmittance sum to one") {
  GradcheckScene gc = make_gradcheck_scene(9, 40, 16, 1.5);
  const RasterizeResult r = rasterize(gc.scene, gc.view, gc.settings);
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) {
      double total = 0, transmittance = 1.0;
      for (const Fragment& f : r.fragments.at(j, i)) {
        total += f.alpha * transmittance;
        transmittance *= (1.0 - f.alpha);
      }
      total += transmittance;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("rendering is deterministic bit for bit") {
  GradcheckScene gc = make_gradcheck_scene(12, 30, 24, 1.0);
  const Tensor a = rasterize(gc.scene, gc.view, gc.settings).image;
  const Tensor b = rasterize(gc.scene, gc.view, gc.settings).image;
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("blur only affects pixels near projected edges") {
  GradcheckScene gc = make_gradcheck_scene(15, 20, 24, 0.0);
  RenderSettings blurred = gc.settings;
  blurred.blur_width = 1.0;
  const Tensor hard = rasterize(gc.scene, gc.view, gc.settings).image;
  const Tensor soft = rasterize(gc.scene, gc.view, blurred).image;

  std::vector<uint8_t> ok;
  Tensor proj = project(gc.scene.surface.positions, gc.view, gc.settings.order,
                        gc.settings.camera, &ok);
  const auto& tris = gc.scene.surface.topology->triangles;
  for (int i = 0; i < 24; ++i) {
    for (int j = 0; j < 24; ++j) {
      double diff = 0;
      for (int c = 0; c < 3; ++c) diff = std::max(diff, std::abs(hard.at(i, j, c) - soft.at(i, j, c)));
      if (diff < 1e-12) continue;
      // Differing pixel must lie within 2*blur of some projected edge.
      const Vec2 p{j + 0.5, i + 0.5};
      double best = 1e9;
      for (const auto& tri : tris) {
        if (!ok[static_cast<size_t>(tri[0])] || !ok[static_cast<size_t>(tri[1])] ||
            !ok[static_cast<size_t>(tri[2])]) {
          continue;
        }
        for (int e = 0; e < 3; ++e) {
          const int a = tri[static_cast<size_t>(e)];
          const int b = tri[static_cast<size_t>((e + 1) % 3)];
          const Vec2 pa{proj[3 * a], proj[3 * a + 1]};
          const Vec2 pb{proj[3 * b], proj[3 * b + 1]};
          const Vec2 d = pb - pa;
          const double ee = dot(d, d);
          double t = ee > 0 ? dot(p - pa, d) / ee : 0.0;
          t = std::clamp(t, 0.0, 1.0);
          const Vec2 q = pa + t * d;
          best = std::min(best, norm(p - q));
        }
      }
      CHECK(best <= 2.0);
    }
  }
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  GradcheckScene gc = make_gradcheck_scene(18, 10, 16, 1.0);
  const RasterizeResult r = rasterize(gc.scene, gc.view, gc.settings);
  Tensor zeros(Shape{16, 16, 3});
  const SceneGradients g =
      rasterize_backward(gc.scene, gc.view, gc.settings, r.fragments, zeros);
  CHECK(g.d_positions.abs_max() == 0.0);
  CHECK(g.d_texture.abs_max() == 0.0);
  CHECK(g.d_background.abs_max() == 0.0);
  CHECK(g.d_viewpoint.abs_max() == 0.0);
}

TEST_CASE("backward: interior color gradient equals the barycentric weight") {
  CameraIntrinsics k;
  k.image_size = 16;
  SceneRepresentation scene = simple_scene(1, k);
  set_cover_triangle(scene, 0, 0.0, 0.5, 0.5, 0.5);
  RenderSettings settings{k, RotationOrder::kXY, 1.0};
  const RasterizeResult r = rasterize(scene, Viewpoint{}, settings);
  // Upstream selects pixel (8, 8), red channel.
  Tensor upstream(Shape{16, 16, 3});
  upstream.at(8, 8, 0) = 1.0;
  const SceneGradients g =
      rasterize_backward(scene, Viewpoint{}, settings, r.fragments, upstream);
  const auto& frag = r.fragments.at(8, 8).front();
  CHECK(frag.alpha == 1.0);
  CHECK(g.d_texture[3 * 0 + 0] == doctest::Approx(frag.b0).epsilon(1e-12));
  CHECK(g.d_texture[3 * 1 + 0] == doctest::Approx(frag.b1).epsilon(1e-12));
  CHECK(g.d_texture[3 * 2 + 0] == doctest::Approx(frag.b2).epsilon(1e-12));
  CHECK(g.d_texture[1] == 0.0);  // green channel untouched
}

TEST_CASE("backward rejects mismatched forward inputs") {
  GradcheckScene gc = make_gradcheck_scene(21, 10, 16, 1.0);
  const RasterizeResult r = rasterize(gc.scene, gc.view, gc.settings);
  SceneRepresentation tampered = gc.scene;
  tampered.texture[0] += 0.25;
  Tensor upstream(Shape{16, 16, 3}, 1.0);
  CHECK_THROWS_AS(
      rasterize_backward(tampered, gc.view, gc.settings, r.fragments, upstream),
      std::invalid_argument);
}

TEST_CASE("rasterize rejects non-finite geometry") {
  CameraIntrinsics k;
  k.image_size = 16;
  SceneRepresentation scene = simple_scene(1, k);
  scene.surface.positions[2] = std::nan("");
  RenderSettings settings{k, RotationOrder::kXY, 1.0};
  CHECK_THROWS_AS(rasterize(scene, Viewpoint{}, settings), std::invalid_argument);
}

TEST_CASE("gradcheck: all slots below 1e-3 with blur, silhouettes fail without") {
  GradcheckOptions opts;
  opts.seed = 4;
  opts.triangle_count = 40;
  opts.image_size = 24;
  opts.blur_width = 1.0;
  const GradcheckReport blurred = gradcheck_random(opts);
  for (const auto& slot : blurred.slots) {
    INFO(slot.name, " -> ", slot.max_rel_error);
    CHECK(slot.max_rel_error < 1e-3);
  }

  opts.blur_width = 0.0;
  const GradcheckReport hard = gradcheck_random(opts);
  CHECK(hard.slot_error("silhouette_positions") > 1e-1);  // blur is what makes these exist
  CHECK(hard.slot_error("colors") < 1e-3);
}

TEST_CASE("full pipeline gradient: radial coefficients through the renderer") {
  // d ||render - target||^2 / d alpha via compose -> spherical -> rasterize.
  TopologyPtr topo = shared_tessellation(17, 17);
  Rng rng(31);
  RadialField field = random_radial_field(4, rng, 0.5, 0.03, 0.4);
  std::vector<std::vector<Var>> basis_vars;
  for (const auto& stack : field.bases) {
    std::vector<Var> vars;
    for (const auto& level : stack) vars.push_back(constant(level));
    basis_vars.push_back(std::move(vars));
  }
  CameraIntrinsics k;
  k.image_size = 24;
  RenderSettings settings{k, RotationOrder::kXY, 1.0};
  Tensor bg = rng.uniform_tensor({48, 48, 3}, 0.1, 0.9);
  Tensor tex = rng.uniform_tensor({topo->vertex_count(), 3}, 0.1, 0.9);
  Tensor target = rng.uniform_tensor({24, 24, 3}, 0, 1);
  Tensor view(Shape{3}, {0.1, -0.3, 0.0});

  auto loss_for = [&](const Var& alphas) {
    Var rho = reshape(compose_radial_var(alphas, basis_vars, 4), Shape{topo->vertex_count()});
    Var positions = spherical_positions_var(rho, *topo);
    Var img = render_scene_var(positions, constant(tex), constant(bg), constant(view), topo,
                               0.2, settings);
    return sum(square(sub(img, constant(target))));
  };
  Var alphas = parameter(field.alphas);
  Tensor analytic = backward(loss_for(alphas)).at(alphas).value();
  Tensor fd = finite_difference(
      [&](const Tensor& t) { return loss_for(constant(t)).value().item(); }, field.alphas,
      1e-6);
  for (int64_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-4});
    CHECK(std::abs(analytic[i] - fd[i]) / denom < 1e-3);
  }
}

TEST_CASE("render_batch_var is deterministic under threading") {
  TopologyPtr topo = shared_tessellation(9, 9);
  Rng rng(41);
  Tensor rho = rng.uniform_tensor({81}, 0.3, 0.8);
  CameraIntrinsics k;
  k.image_size = 16;
  RenderSettings settings{k, RotationOrder::kXY, 1.0};
  std::vector<RenderJob> jobs;
  for (int s = 0; s < 4; ++s) {
    Var positions = spherical_positions_var(constant(rho), *topo);
    jobs.push_back(RenderJob{positions,
                             constant(rng.uniform_tensor({81, 3}, 0, 1)),
                             constant(rng.uniform_tensor({40, 40, 3}, 0, 1)),
                             constant(Tensor(Shape{3}, {0.0, 0.1 * s, 0.0}))});
  }
  const Tensor serial = render_batch_var(jobs, topo, 0.2, settings, 1).value();
  const Tensor parallel = render_batch_var(jobs, topo, 0.2, settings, 4).value();
  for (int64_t i = 0; i < serial.size(); ++i) CHECK(serial[i] == parallel[i]);
}
