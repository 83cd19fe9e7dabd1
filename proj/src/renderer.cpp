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

#include "starmesh/renderer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>

namespace starmesh {

namespace {

// Screen-space parallelogram areas below this are treated as degenerate
// (pole triangles of the tessellation land here by construction).
constexpr double kMinScreenArea = 1e-9;

uint64_t fnv1a(uint64_t h, const void* data, size_t len) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  // Word-at-a-time; this hash only guards forward/backward pairing.
  while (len >= 8) {
    uint64_t w;
    std::memcpy(&w, p, 8);
    h ^= w;
    h *= 0x100000001B3ULL;
    p += 8;
    len -= 8;
  }
  while (len > 0) {
    h ^= *p++;
    h *= 0x100000001B3ULL;
    --len;
  }
  return h;
}

uint64_t fnv1a_tensor(uint64_t h, const Tensor& t) {
  h = fnv1a(h, t.data(), static_cast<size_t>(t.size()) * sizeof(double));
  for (int64_t d : t.shape()) h = fnv1a(h, &d, sizeof(d));
  return h;
}

struct ProjectedVerts {
  std::vector<Vec2> pos;     // pixels
  std::vector<double> depth;
  std::vector<uint8_t> renderable;
};

ProjectedVerts project_vertices(const SceneRepresentation& scene, const Mat3& rot,
                                const CameraIntrinsics& K) {
  const int n = scene.surface.vertex_count();
  ProjectedVerts out;
  out.pos.resize(static_cast<size_t>(n));
  out.depth.resize(static_cast<size_t>(n));
  out.renderable.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Vec3 p{scene.surface.positions[3 * i], scene.surface.positions[3 * i + 1],
                 scene.surface.positions[3 * i + 2]};
    const ProjectedPoint q = project_point(p, rot, K);
    out.pos[static_cast<size_t>(i)] = Vec2{q.x, q.y};
    out.depth[static_cast<size_t>(i)] = q.depth;
    out.renderable[static_cast<size_t>(i)] = q.renderable ? 1 : 0;
  }
  return out;
}

// Closest point on segment [a,b] to p, by the clamped projection parameter.
struct SegmentHit {
  double t;
  double dist2;
};

SegmentHit closest_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 e = b - a;
  const double ee = dot(e, e);
  double t = ee > 0 ? dot(p - a, e) / ee : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 q = a + t * e;
  const Vec2 d = p - q;
  return {t, dot(d, d)};
}

struct PixelColor {
  double c[3];
};

PixelColor fragment_color(const Fragment& f, const SceneRepresentation& scene) {
  const auto& tri = scene.surface.topology->triangles[static_cast<size_t>(f.tri)];
  PixelColor out{};
  for (int c = 0; c < 3; ++c) {
    out.c[c] = f.b0 * scene.texture[3 * tri[0] + c] + f.b1 * scene.texture[3 * tri[1] + c] +
               f.b2 * scene.texture[3 * tri[2] + c];
  }
  return out;
}

}  // namespace

void validate_scene(const SceneRepresentation& scene) {
  const int v = scene.surface.vertex_count();
  if (v > 0) {
    if (scene.surface.positions.shape() != Shape{v, 3}) {
      throw std::invalid_argument("scene: positions must be [V,3]");
    }
    if (scene.texture.shape() != Shape{v, 3}) {
      throw std::invalid_argument("scene: texture length must equal vertex count");
    }
    if (!scene.surface.positions.all_finite()) {
      throw std::invalid_argument("scene: non-finite vertex positions");
    }
    if (!scene.texture.all_finite()) {
      throw std::invalid_argument("scene: non-finite texture");
    }
  }
  if (scene.background.texture.empty() || !scene.background.texture.all_finite()) {
    throw std::invalid_argument("scene: background texture missing or non-finite");
  }
}

uint64_t scene_fingerprint(const SceneRepresentation& scene, const Viewpoint& v,
                           const RenderSettings& settings) {
  uint64_t h = 0xcbf29ce484222325ULL;
  if (scene.surface.vertex_count() > 0) {
    h = fnv1a_tensor(h, scene.surface.positions);
    h = fnv1a_tensor(h, scene.texture);
  }
  h = fnv1a_tensor(h, scene.background.texture);
  const double vs[3] = {v.pitch, v.yaw, v.roll};
  h = fnv1a(h, vs, sizeof(vs));
  const double ks[4] = {settings.camera.focal, double(settings.camera.image_size),
                        settings.camera.half_extent, settings.blur_width};
  h = fnv1a(h, ks, sizeof(ks));
  const int order = settings.order == RotationOrder::kXY ? 0 : 1;
  h = fnv1a(h, &order, sizeof(order));
  h = fnv1a(h, &scene.background.angular_scale, sizeof(double));
  return h;
}

RasterizeResult rasterize(const SceneRepresentation& scene, const Viewpoint& v,
                          const RenderSettings& settings) {
  validate_scene(scene);
  const CameraIntrinsics& K = settings.camera;
  const int W = K.image_size, H = K.image_size;
  const double blur = settings.blur_width;

  FragmentList frags;
  frags.width = W;
  frags.height = H;
  frags.fingerprint = scene_fingerprint(scene, v, settings);
  std::vector<std::pair<int32_t, Fragment>> emitted;

  const Mat3 rot = rotation_matrix(v, settings.order);
  const int tri_count =
      scene.surface.topology ? static_cast<int>(scene.surface.topology->triangles.size()) : 0;

  if (tri_count > 0) {
    emitted.reserve(static_cast<size_t>(tri_count) * 4);
    const ProjectedVerts pv = project_vertices(scene, rot, K);
    for (int t = 0; t < tri_count; ++t) {
      const auto& tri = scene.surface.topology->triangles[static_cast<size_t>(t)];
      if (!pv.renderable[static_cast<size_t>(tri[0])] ||
          !pv.renderable[static_cast<size_t>(tri[1])] ||
          !pv.renderable[static_cast<size_t>(tri[2])]) {
        continue;  // flagged non-renderable
      }
      const Vec2 q0 = pv.pos[static_cast<size_t>(tri[0])];
      const Vec2 q1 = pv.pos[static_cast<size_t>(tri[1])];
      const Vec2 q2 = pv.pos[static_cast<size_t>(tri[2])];
      const double d0 = pv.depth[static_cast<size_t>(tri[0])];
      const double d1 = pv.depth[static_cast<size_t>(tri[1])];
      const double d2 = pv.depth[static_cast<size_t>(tri[2])];
      const double S = cross(q1 - q0, q2 - q0);
      if (std::abs(S) < kMinScreenArea) continue;  // degenerate

      const double xmin = std::min({q0.x, q1.x, q2.x}) - blur;
      const double xmax = std::max({q0.x, q1.x, q2.x}) + blur;
      const double ymin = std::min({q0.y, q1.y, q2.y}) - blur;
      const double ymax = std::max({q0.y, q1.y, q2.y}) + blur;
      const int j0 = std::max(0, static_cast<int>(std::ceil(xmin - 0.5)));
      const int j1 = std::min(W - 1, static_cast<int>(std::floor(xmax - 0.5)));
      const int i0 = std::max(0, static_cast<int>(std::ceil(ymin - 0.5)));
      const int i1 = std::min(H - 1, static_cast<int>(std::floor(ymax - 0.5)));

      for (int i = i0; i <= i1; ++i) {
        for (int j = j0; j <= j1; ++j) {
          const Vec2 p{j + 0.5, i + 0.5};
          const double a0 = cross(q1 - p, q2 - p);
          const double a1 = cross(q2 - p, q0 - p);
          const double a2 = cross(q0 - p, q1 - p);
          const double b0 = a0 / S, b1 = a1 / S, b2 = a2 / S;
          Fragment f;
          f.tri = t;
          if (b0 >= 0 && b1 >= 0 && b2 >= 0) {
            f.kind = 0;
            f.alpha = 1.0;
            f.b0 = b0;
            f.b1 = b1;
            f.b2 = b2;
          } else if (blur > 0) {
            const SegmentHit h01 = closest_on_segment(p, q0, q1);
            const SegmentHit h12 = closest_on_segment(p, q1, q2);
            const SegmentHit h20 = closest_on_segment(p, q2, q0);
            int kind = 1;
            SegmentHit best = h01;
            if (h12.dist2 < best.dist2) {
              best = h12;
              kind = 2;
            }
            if (h20.dist2 < best.dist2) {
              best = h20;
              kind = 3;
            }
            const double d = std::sqrt(best.dist2);
            if (d >= blur) continue;
            f.alpha = 1.0 - d / blur;
            f.t = best.t;
            // Nearest-feature barycentrics; clamped t == 0/1 degrades to the
            // vertex feature.
            if (best.t <= 0.0 || best.t >= 1.0) {
              int vert;  // local index of the touching vertex
              if (kind == 1) vert = best.t <= 0.0 ? 0 : 1;
              else if (kind == 2) vert = best.t <= 0.0 ? 1 : 2;
              else vert = best.t <= 0.0 ? 2 : 0;
              f.kind = static_cast<int8_t>(4 + vert);
              f.b0 = vert == 0 ? 1.0 : 0.0;
              f.b1 = vert == 1 ? 1.0 : 0.0;
              f.b2 = vert == 2 ? 1.0 : 0.0;
            } else {
              f.kind = static_cast<int8_t>(kind);
              if (kind == 1) {
                f.b0 = 1.0 - best.t;
                f.b1 = best.t;
                f.b2 = 0.0;
              } else if (kind == 2) {
                f.b0 = 0.0;
                f.b1 = 1.0 - best.t;
                f.b2 = best.t;
              } else {
                f.b0 = best.t;
                f.b1 = 0.0;
                f.b2 = 1.0 - best.t;
              }
            }
          } else {
            continue;
          }
          f.depth = f.b0 * d0 + f.b1 * d1 + f.b2 * d2;
          emitted.emplace_back(static_cast<int32_t>(i) * W + j, f);
        }
      }
    }
  }

  // Bucket the flat emission into CSR, then sort each pixel front-to-back.
  frags.offsets.assign(static_cast<size_t>(W) * H + 1, 0);
  for (const auto& [px, f] : emitted) frags.offsets[static_cast<size_t>(px) + 1]++;
  for (size_t p = 1; p < frags.offsets.size(); ++p) frags.offsets[p] += frags.offsets[p - 1];
  frags.fragments.resize(emitted.size());
  {
    std::vector<int32_t> cursor(frags.offsets.begin(), frags.offsets.end() - 1);
    for (const auto& [px, f] : emitted) {
      frags.fragments[static_cast<size_t>(cursor[static_cast<size_t>(px)]++)] = f;
    }
  }
  for (size_t p = 0; p < static_cast<size_t>(W) * H; ++p) {
    std::sort(frags.fragments.begin() + frags.offsets[p],
              frags.fragments.begin() + frags.offsets[p + 1],
              [](const Fragment& a, const Fragment& b) {
                if (a.depth != b.depth) return a.depth < b.depth;
                return a.tri < b.tri;
              });
  }

  Tensor image(Shape{H, W, 3});
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const auto px = frags.at(j, i);
      double color[3] = {0, 0, 0};
      double transmittance = 1.0;
      for (const Fragment& f : px) {
        if (transmittance == 0.0) break;
        const PixelColor c = fragment_color(f, scene);
        for (int ch = 0; ch < 3; ++ch) color[ch] += f.alpha * transmittance * c.c[ch];
        transmittance *= (1.0 - f.alpha);
      }
      if (transmittance != 0.0) {
        const Vec3 bg = sample_background(j, i, v, scene.background);
        color[0] += transmittance * bg.x;
        color[1] += transmittance * bg.y;
        color[2] += transmittance * bg.z;
      }
      for (int ch = 0; ch < 3; ++ch) image.at(i, j, ch) = color[ch];
    }
  }
  return {std::move(image), std::move(frags)};
}

SceneGradients rasterize_backward(const SceneRepresentation& scene, const Viewpoint& v,
                                  const RenderSettings& settings, const FragmentList& fragments,
                                  const Tensor& upstream) {
  validate_scene(scene);
  if (fragments.fingerprint != scene_fingerprint(scene, v, settings)) {
    throw std::invalid_argument("rasterize_backward: inputs do not match the forward pass");
  }
  const CameraIntrinsics& K = settings.camera;
  const int W = K.image_size, H = K.image_size;
  if (upstream.shape() != Shape{H, W, 3}) {
    throw std::invalid_argument("rasterize_backward: upstream must be [H,W,3]");
  }
  const double blur = settings.blur_width;
  const int vcount = scene.surface.vertex_count();

  SceneGradients g;
  g.d_positions = Tensor(Shape{std::max(vcount, 0), 3});
  g.d_texture = Tensor(Shape{std::max(vcount, 0), 3});
  g.d_background = Tensor(scene.background.texture.shape());
  g.d_viewpoint = Tensor(Shape{3});

  const Mat3 rot = rotation_matrix(v, settings.order);
  const auto drot = rotation_matrix_derivatives(v, settings.order);
  ProjectedVerts pv;
  if (vcount > 0) pv = project_vertices(scene, rot, K);
  // Screen-space gradient accumulator per vertex.
  std::vector<Vec2> gq(static_cast<size_t>(std::max(vcount, 0)), Vec2{0, 0});

  const double ppu = K.pixels_per_unit();
  const double bg_shift_scale = scene.background.angular_scale * scene.background.pixels_per_radian;

  std::vector<double> tails;  // (K+1) x 3, tail after each fragment
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const auto px = fragments.at(j, i);
      const double u[3] = {upstream.at(i, j, 0), upstream.at(i, j, 1), upstream.at(i, j, 2)};
      const BackgroundSample bg = sample_background_detail(j, i, v, scene.background);

      const size_t n = px.size();
      tails.assign(3 * (n + 1), 0.0);
      tails[3 * n + 0] = bg.color.x;
      tails[3 * n + 1] = bg.color.y;
      tails[3 * n + 2] = bg.color.z;
      std::vector<PixelColor> colors(n);
      for (size_t k = n; k-- > 0;) {
        colors[k] = fragment_color(px[k], scene);
        for (int c = 0; c < 3; ++c) {
          tails[3 * k + c] =
              px[k].alpha * colors[k].c[c] + (1.0 - px[k].alpha) * tails[3 * (k + 1) + c];
        }
      }

      double transmittance = 1.0;
      for (size_t k = 0; k < n && transmittance != 0.0; ++k) {
        const Fragment& f = px[k];
        const auto& tri = scene.surface.topology->triangles[static_cast<size_t>(f.tri)];
        // d(color)/d(alpha_k) = T_k (c_k - tail_{k+1}).
        double dl_dalpha = 0.0;
        double dl_dc[3];
        for (int c = 0; c < 3; ++c) {
          dl_dalpha += u[c] * transmittance * (colors[k].c[c] - tails[3 * (k + 1) + c]);
          dl_dc[c] = u[c] * f.alpha * transmittance;
        }
        // Color -> texture through the (clamped) barycentrics.
        const double bary[3] = {f.b0, f.b1, f.b2};
        double dl_db[3] = {0, 0, 0};
        for (int m = 0; m < 3; ++m) {
          for (int c = 0; c < 3; ++c) {
            g.d_texture[3 * tri[static_cast<size_t>(m)] + c] += bary[m] * dl_dc[c];
            dl_db[m] += dl_dc[c] * scene.texture[3 * tri[static_cast<size_t>(m)] + c];
          }
        }

        // Screen-space position gradients.
        const Vec2 p{j + 0.5, i + 0.5};
        const Vec2 q[3] = {pv.pos[static_cast<size_t>(tri[0])],
                           pv.pos[static_cast<size_t>(tri[1])],
                           pv.pos[static_cast<size_t>(tri[2])]};
        if (f.kind == 0) {
          // Interior: b_m = A_m / S.
          const double S = cross(q[1] - q[0], q[2] - q[0]);
          const Vec2 dS[3] = {
              Vec2{q[1].y - q[2].y, q[2].x - q[1].x},
              Vec2{q[2].y - q[0].y, q[0].x - q[2].x},
              Vec2{q[0].y - q[1].y, q[1].x - q[0].x},
          };
          // dA_m/dq_j for m != j; dA_m/dq_m = 0.
          auto dA = [&](int m, int jv) -> Vec2 {
            // A_m = cross(q_{m+1} - p, q_{m+2} - p) with indices mod 3.
            const int u1 = (m + 1) % 3, u2 = (m + 2) % 3;
            if (jv == u1) {
              const Vec2 w = q[u2] - p;
              return Vec2{w.y, -w.x};
            }
            if (jv == u2) {
              const Vec2 w = q[u1] - p;
              return Vec2{-w.y, w.x};
            }
            return Vec2{0, 0};
          };
          for (int m = 0; m < 3; ++m) {
            if (dl_db[m] == 0.0) continue;
            for (int jv = 0; jv < 3; ++jv) {
              const Vec2 grad = (1.0 / S) * (dA(m, jv) - bary[m] * dS[jv]);
              gq[static_cast<size_t>(tri[static_cast<size_t>(jv)])] =
                  gq[static_cast<size_t>(tri[static_cast<size_t>(jv)])] + dl_db[m] * grad;
            }
          }
          // alpha is constant 1 inside; no alpha term.
        } else if (f.kind >= 1 && f.kind <= 3) {
          // Edge feature: local vertices (e0, e1) of the edge, third is e2.
          const int e0 = f.kind - 1;
          const int e1 = (e0 + 1) % 3;
          const Vec2 a = q[e0], b = q[e1];
          const Vec2 e = b - a;
          const double ee = dot(e, e);
          const Vec2 m_vec = p - a;
          const double t = f.t;
          const Vec2 qpt = a + t * e;      // nearest point
          const Vec2 diff = qpt - p;       // (q - p)
          const double d = std::sqrt(dot(diff, diff));
          // Envelope theorem: d(dist)/da keeps t fixed.
          if (d > 0 && blur > 0) {
            const Vec2 dd_da = (1.0 - t) * (1.0 / d) * diff;
            const Vec2 dd_db = t * (1.0 / d) * diff;
            const double dl_dd = -dl_dalpha / blur;
            gq[static_cast<size_t>(tri[static_cast<size_t>(e0)])] =
                gq[static_cast<size_t>(tri[static_cast<size_t>(e0)])] + dl_dd * dd_da;
            gq[static_cast<size_t>(tri[static_cast<size_t>(e1)])] =
                gq[static_cast<size_t>(tri[static_cast<size_t>(e1)])] + dl_dd * dd_db;
          }
          // Barycentric dependence through t (no envelope here).
          const double dl_dt = dl_db[e1] - dl_db[e0];
          if (dl_dt != 0.0 && ee > 0) {
            const Vec2 dt_da = (1.0 / ee) * (Vec2{0, 0} - e - m_vec + 2.0 * t * e);
            const Vec2 dt_db = (1.0 / ee) * (m_vec - 2.0 * t * e);
            gq[static_cast<size_t>(tri[static_cast<size_t>(e0)])] =
                gq[static_cast<size_t>(tri[static_cast<size_t>(e0)])] + dl_dt * dt_da;
            gq[static_cast<size_t>(tri[static_cast<size_t>(e1)])] =
                gq[static_cast<size_t>(tri[static_cast<size_t>(e1)])] + dl_dt * dt_db;
          }
        } else {
          // Vertex feature: barycentrics constant; only the distance moves.
          const int m = f.kind - 4;
          const Vec2 a = q[m];
          const Vec2 diff = a - p;
          const double d = norm(diff);
          if (d > 0 && blur > 0) {
            const double dl_dd = -dl_dalpha / blur;
            gq[static_cast<size_t>(tri[static_cast<size_t>(m)])] =
                gq[static_cast<size_t>(tri[static_cast<size_t>(m)])] +
                dl_dd * (1.0 / d) * diff;
          }
        }
        transmittance *= (1.0 - f.alpha);
      }

      // Background terms through the residual transmittance.
      if (transmittance != 0.0) {
        double dl_dtx = 0.0, dl_dty = 0.0;
        const double dcx[3] = {bg.dcolor_dx.x, bg.dcolor_dx.y, bg.dcolor_dx.z};
        const double dcy[3] = {bg.dcolor_dy.x, bg.dcolor_dy.y, bg.dcolor_dy.z};
        for (int c = 0; c < 3; ++c) {
          const double w = u[c] * transmittance;
          for (int k = 0; k < 4; ++k) {
            g.d_background[3 * bg.texel[k] + c] += w * bg.weight[k];
          }
          dl_dtx += w * dcx[c];
          dl_dty += w * dcy[c];
        }
        // Shift is (scale*yaw, scale*pitch).
        g.d_viewpoint[1] += dl_dtx * bg_shift_scale;
        g.d_viewpoint[0] += dl_dty * bg_shift_scale;
      }
    }
  }

  // Chain screen-space vertex gradients through the projection.
  if (vcount > 0) {
    const double f = K.focal;
    for (int vi = 0; vi < vcount; ++vi) {
      const Vec2 gv = gq[static_cast<size_t>(vi)];
      if (gv.x == 0.0 && gv.y == 0.0) continue;
      const Vec3 pw{scene.surface.positions[3 * vi], scene.surface.positions[3 * vi + 1],
                    scene.surface.positions[3 * vi + 2]};
      const Vec3 pc = rot * pw;
      const double denom = f - pc.z;
      if (denom <= 0) continue;
      // dq/dpc rows for x and y.
      const Vec3 dqx_dpc{ppu * f / denom, 0.0, ppu * f * pc.x / (denom * denom)};
      const Vec3 dqy_dpc{0.0, -ppu * f / denom, -ppu * f * pc.y / (denom * denom)};
      const Vec3 dl_dpc = gv.x * dqx_dpc + gv.y * dqy_dpc;
      const Vec3 dl_dp = transposed(rot) * dl_dpc;
      g.d_positions[3 * vi + 0] += dl_dp.x;
      g.d_positions[3 * vi + 1] += dl_dp.y;
      g.d_positions[3 * vi + 2] += dl_dp.z;
      for (int a = 0; a < 3; ++a) {
        g.d_viewpoint[a] += dot(dl_dpc, drot[static_cast<size_t>(a)] * pw);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Graph integration

namespace {

SceneRepresentation assemble_scene(const Tensor& positions, const Tensor& colors,
                                   const Tensor& bg_texture, TopologyPtr topology,
                                   double angular_scale, const RenderSettings& settings) {
  SceneRepresentation scene;
  scene.surface.topology = std::move(topology);
  scene.surface.positions = positions;
  scene.texture = colors;
  scene.background = make_background(bg_texture, angular_scale, settings.camera);
  return scene;
}

Viewpoint viewpoint_from_tensor(const Tensor& t) {
  if (t.size() != 3) throw std::invalid_argument("viewpoint tensor must have 3 entries");
  return Viewpoint{t[0], t[1], t[2]};
}

}  // namespace

Var render_scene_var(const Var& positions, const Var& colors, const Var& bg_texture,
                     const Var& viewpoint, TopologyPtr topology, double angular_scale,
                     const RenderSettings& settings) {
  std::vector<RenderJob> jobs{RenderJob{positions, colors, bg_texture, viewpoint}};
  Var batch = render_batch_var(jobs, std::move(topology), angular_scale, settings, 1);
  const int s = settings.camera.image_size;
  return reshape(batch, Shape{s, s, 3});
}

Var render_batch_var(const std::vector<RenderJob>& jobs, TopologyPtr topology,
                     double angular_scale, const RenderSettings& settings, int threads) {
  if (jobs.empty()) throw std::invalid_argument("render_batch_var: no jobs");
  const int n = static_cast<int>(jobs.size());
  const int s = settings.camera.image_size;

  auto scenes = std::make_shared<std::vector<SceneRepresentation>>(static_cast<size_t>(n));
  auto views = std::make_shared<std::vector<Viewpoint>>(static_cast<size_t>(n));
  auto frag_lists = std::make_shared<std::vector<FragmentList>>(static_cast<size_t>(n));

  Tensor out(Shape{n, s, s, 3});
  auto render_one = [&](int k) {
    (*scenes)[static_cast<size_t>(k)] = assemble_scene(
        jobs[static_cast<size_t>(k)].positions.value(), jobs[static_cast<size_t>(k)].colors.value(),
        jobs[static_cast<size_t>(k)].background.value(), topology, angular_scale, settings);
    (*views)[static_cast<size_t>(k)] =
        viewpoint_from_tensor(jobs[static_cast<size_t>(k)].viewpoint.value());
    RasterizeResult r =
        rasterize((*scenes)[static_cast<size_t>(k)], (*views)[static_cast<size_t>(k)], settings);
    std::copy(r.image.data(), r.image.data() + r.image.size(),
              out.data() + static_cast<int64_t>(k) * s * s * 3);
    (*frag_lists)[static_cast<size_t>(k)] = std::move(r.fragments);
  };
  if (threads <= 1 || n == 1) {
    for (int k = 0; k < n; ++k) render_one(k);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(threads, n);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int k = next.fetch_add(1); k < n; k = next.fetch_add(1)) render_one(k);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<Var> inputs;
  inputs.reserve(static_cast<size_t>(4 * n));
  for (const auto& job : jobs) {
    inputs.push_back(job.positions);
    inputs.push_back(job.colors);
    inputs.push_back(job.background);
    inputs.push_back(job.viewpoint);
  }

  RenderSettings set = settings;
  return make_op(
      "render_batch", std::move(out), std::move(inputs),
      [scenes, views, frag_lists, set, n, s, threads](const Var&, const Var& grad) {
        const Tensor& gt = grad.value();
        std::vector<SceneGradients> grads(static_cast<size_t>(n));
        auto backward_one = [&](int k) {
          Tensor upstream(Shape{s, s, 3});
          std::copy(gt.data() + static_cast<int64_t>(k) * s * s * 3,
                    gt.data() + static_cast<int64_t>(k + 1) * s * s * 3, upstream.data());
          grads[static_cast<size_t>(k)] = rasterize_backward(
              (*scenes)[static_cast<size_t>(k)], (*views)[static_cast<size_t>(k)], set,
              (*frag_lists)[static_cast<size_t>(k)], upstream);
        };
        if (threads <= 1 || n == 1) {
          for (int k = 0; k < n; ++k) backward_one(k);
        } else {
          std::vector<std::thread> pool;
          std::atomic<int> next{0};
          const int workers = std::min(threads, n);
          for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
              for (int k = next.fetch_add(1); k < n; k = next.fetch_add(1)) backward_one(k);
            });
          }
          for (auto& th : pool) th.join();
        }
        std::vector<Var> input_grads;
        input_grads.reserve(static_cast<size_t>(4 * n));
        for (int k = 0; k < n; ++k) {
          input_grads.push_back(constant(std::move(grads[static_cast<size_t>(k)].d_positions)));
          input_grads.push_back(constant(std::move(grads[static_cast<size_t>(k)].d_texture)));
          input_grads.push_back(constant(std::move(grads[static_cast<size_t>(k)].d_background)));
          input_grads.push_back(constant(std::move(grads[static_cast<size_t>(k)].d_viewpoint)));
        }
        return input_grads;
      });
}

}  // namespace starmesh
