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

#include "starmesh/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "starmesh/image_io.hpp"
#include "starmesh/sha256.hpp"

namespace starmesh {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Shared low-dimensional texture model: 4 parameters per channel over the
// vertex angles.
double texture_channel(const double* u, double theta, double phi) {
  return sigmoid_d(u[0] + u[1] * std::cos(theta) + u[2] * std::sin(theta) * std::cos(phi) +
                   u[3] * std::sin(theta) * std::sin(2.0 * phi));
}

// Background model: 5 parameters per channel over normalized window coords.
double background_channel(const double* v, double x, double y) {
  return sigmoid_d(v[0] + v[1] * x + v[2] * y + v[3] * std::sin(kTwoPi * (2.0 * x + y) + v[4]));
}

void sample_texture_params(Rng& rng, std::vector<double>& out) {
  for (int c = 0; c < 3; ++c) {
    out.push_back(rng.uniform(-1.0, 1.0));
    out.push_back(rng.uniform(-2.0, 2.0));
    out.push_back(rng.uniform(-2.0, 2.0));
    out.push_back(rng.uniform(-2.0, 2.0));
  }
}

void sample_background_params(Rng& rng, std::vector<double>& out) {
  for (int c = 0; c < 3; ++c) {
    out.push_back(rng.uniform(-0.8, 0.8));
    out.push_back(rng.uniform(-1.5, 1.5));
    out.push_back(rng.uniform(-1.5, 1.5));
    out.push_back(rng.uniform(0.0, 0.8));
    out.push_back(rng.uniform(0.0, kTwoPi));
  }
}

Tensor family_texture(const TessellationTopology& topo, const double* params) {
  Tensor tex(Shape{topo.vertex_count(), 3});
  for (int v = 0; v < topo.vertex_count(); ++v) {
    const double t = topo.theta[static_cast<size_t>(v)];
    const double p = topo.phi[static_cast<size_t>(v)];
    for (int c = 0; c < 3; ++c) tex[3 * v + c] = texture_channel(params + 4 * c, t, p);
  }
  return tex;
}

Tensor family_background(int side, const double* params) {
  Tensor bg(Shape{side, side, 3});
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double y = 2.0 * i / side - 1.0;
      const double x = 2.0 * j / side - 1.0;
      for (int c = 0; c < 3; ++c) bg.at(i, j, c) = background_channel(params + 5 * c, x, y);
    }
  }
  return bg;
}

int background_side(const HarnessConfig& cfg) {
  return required_background_side(cfg.camera, cfg.viewpoint, cfg.angular_scale);
}

ModelConfig identity_model_config(const HarnessConfig& cfg) {
  ModelConfig m;
  m.grid_level = cfg.grid_level;
  m.image_size = cfg.camera.image_size;
  m.bg_texture_side = background_side(cfg);
  return m;
}

const IdentityGenerator& identity_generator_for(const HarnessConfig& cfg) {
  static std::mutex mu;
  static std::map<std::string, std::unique_ptr<IdentityGenerator>> cache;
  std::ostringstream key;
  key << cfg.identity_seed << ":" << cfg.grid_level << ":" << background_side(cfg) << ":"
      << cfg.identity_alpha_scale << ":" << cfg.max_radius << ":" << cfg.camera.image_size;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key.str());
  if (it == cache.end()) {
    it = cache
             .emplace(key.str(), std::make_unique<IdentityGenerator>(
                                     identity_model_config(cfg), cfg.identity_seed,
                                     cfg.max_radius, cfg.identity_alpha_scale))
             .first;
  }
  return *it->second;
}

}  // namespace

std::string family_name(SceneFamily f) {
  switch (f) {
    case SceneFamily::kEllipsoids: return "ellipsoids";
    case SceneFamily::kBumpySpheres: return "bumpy-spheres";
    case SceneFamily::kTwoLobe: return "two-lobe";
    case SceneFamily::kIdentity: return "identity";
  }
  return "unknown";
}

SceneFamily family_from_name(const std::string& name) {
  if (name == "ellipsoids") return SceneFamily::kEllipsoids;
  if (name == "bumpy-spheres") return SceneFamily::kBumpySpheres;
  if (name == "two-lobe") return SceneFamily::kTwoLobe;
  if (name == "identity") return SceneFamily::kIdentity;
  throw std::invalid_argument("unknown scene family: " + name);
}

SyntheticScene sample_scene(SceneFamily family, int index, uint64_t dataset_seed,
                            const HarnessConfig& cfg) {
  Rng rng = Rng(dataset_seed).fork(2 * static_cast<uint64_t>(index));
  SyntheticScene s;
  s.family = family;
  s.index = index;
  switch (family) {
    case SceneFamily::kEllipsoids: {
      for (int k = 0; k < 3; ++k) s.params.push_back(rng.uniform(0.3, 0.55));
      sample_texture_params(rng, s.params);
      sample_background_params(rng, s.params);
      break;
    }
    case SceneFamily::kBumpySpheres: {
      s.params.push_back(rng.uniform(0.45, 0.55));                          // r0
      s.params.push_back(rng.uniform(cfg.bumpy_relief_lo, cfg.bumpy_relief_hi));  // relief
      double weight_sum = 0;
      std::vector<double> bumps;
      for (int k = 0; k < 4; ++k) {
        bumps.push_back(static_cast<double>(1 + rng.uniform_int(4)));  // m
        bumps.push_back(static_cast<double>(1 + rng.uniform_int(3)));  // l
        bumps.push_back(rng.uniform(0.0, kTwoPi));                     // psi
        bumps.push_back(rng.uniform(0.0, kTwoPi));                     // chi
        const double w = rng.uniform(-1.0, 1.0);
        bumps.push_back(w);
        weight_sum += std::abs(w);
      }
      for (int k = 0; k < 4; ++k) bumps[static_cast<size_t>(5 * k + 4)] /= weight_sum;
      s.params.insert(s.params.end(), bumps.begin(), bumps.end());
      sample_texture_params(rng, s.params);
      sample_background_params(rng, s.params);
      break;
    }
    case SceneFamily::kTwoLobe: {
      s.params.push_back(rng.uniform(0.4, 0.5));    // r0
      s.params.push_back(rng.uniform(0.3, 0.7));    // lambda
      s.params.push_back(rng.uniform(0.0, 0.5));    // axis tilt
      s.params.push_back(rng.uniform(0.0, kTwoPi)); // axis azimuth
      sample_texture_params(rng, s.params);
      sample_background_params(rng, s.params);
      break;
    }
    case SceneFamily::kIdentity: {
      const ModelConfig m = identity_model_config(cfg);
      for (int64_t k = 0; k < m.d(); ++k) s.params.push_back(rng.normal());
      break;
    }
  }
  return s;
}

SceneRepresentation realize_scene(const SyntheticScene& spec, const HarnessConfig& cfg) {
  if (spec.family == SceneFamily::kIdentity) {
    const IdentityGenerator& gen = identity_generator_for(cfg);
    Tensor z(Shape{1, static_cast<int64_t>(spec.params.size())},
             std::vector<double>(spec.params));
    return gen.scene_for(z, cfg.angular_scale, cfg.camera);
  }

  TopologyPtr topo = shared_tessellation((1 << cfg.grid_level) + 1, (1 << cfg.grid_level) + 1);
  const int side = topo->rows;
  Tensor rho(Shape{side, side});
  const double* q = spec.params.data();
  size_t tex_at = 0;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const int v = topo->vertex_index(i, j);
      const double theta = topo->theta[static_cast<size_t>(v)];
      const double phi = topo->phi[static_cast<size_t>(v)];
      double r = 0.5;
      switch (spec.family) {
        case SceneFamily::kEllipsoids: {
          const double a = q[0], b = q[1], c = q[2];
          const double sx = std::sin(theta) * std::cos(phi) / a;
          const double sy = std::sin(theta) * std::sin(phi) / b;
          const double sz = std::cos(theta) / c;
          r = 1.0 / std::sqrt(sx * sx + sy * sy + sz * sz);
          break;
        }
        case SceneFamily::kBumpySpheres: {
          // Face-like relief: bumps live on the frontal (+z) cap and vanish
          // toward the rim and the back, so the frontal silhouette of the
          // depth-inverted counterpart matches (the illusion stays live).
          const double r0 = q[0], relief = q[1];
          const double cap = std::max(std::cos(theta), 0.0);
          const double window = 4.0 * std::sin(theta) * std::sin(theta) * cap * cap;
          double g = 0;
          for (int k = 0; k < 4; ++k) {
            const double* b = q + 2 + 5 * k;
            g += b[4] * std::cos(b[0] * phi + b[2]) * std::cos(b[1] * theta + b[3]);
          }
          r = r0 * (1.0 + relief * window * g);
          break;
        }
        case SceneFamily::kTwoLobe: {
          const double r0 = q[0], lambda = q[1], tilt = q[2], az = q[3];
          const double u = std::cos(theta) * std::cos(tilt) +
                           std::sin(theta) * std::sin(tilt) * std::cos(phi - az);
          r = r0 * (1.0 + lambda * u * u);
          break;
        }
        case SceneFamily::kIdentity:
          break;  // handled above
      }
      rho.at(i, j) = r;
    }
  }
  switch (spec.family) {
    case SceneFamily::kEllipsoids: tex_at = 3; break;
    case SceneFamily::kBumpySpheres: tex_at = 22; break;
    case SceneFamily::kTwoLobe: tex_at = 4; break;
    case SceneFamily::kIdentity: break;
  }

  auto scaled = enforce_scale_radial(rho, cfg.max_radius);
  SceneRepresentation scene;
  scene.surface = spherical_to_cartesian(scaled.first, topo);
  scene.texture = family_texture(*topo, q + tex_at);
  scene.background = make_background(family_background(background_side(cfg), q + tex_at + 12),
                                     cfg.angular_scale, cfg.camera);
  return scene;
}

// ---------------------------------------------------------------------------
// Dataset factory

DatasetPaths make_dataset(SceneFamily family, int n, const ViewpointDistribution& dist,
                          uint64_t seed, const std::string& out_dir, const HarnessConfig& cfg) {
  HarnessConfig local = cfg;
  local.viewpoint = dist;
  fs::create_directories(fs::path(out_dir) / "images");

  const RenderSettings settings = local.render_settings();
  json sidecar = json::array();
  json files = json::array();
  for (int k = 0; k < n; ++k) {
    SyntheticScene spec = sample_scene(family, k, seed, local);
    Rng view_rng = Rng(seed).fork(2 * static_cast<uint64_t>(k) + 1);
    spec.viewpoint = sample_viewpoint(dist, view_rng);

    SceneRepresentation scene = realize_scene(spec, local);
    RasterizeResult render = rasterize(scene, spec.viewpoint, settings);

    char name[32];
    std::snprintf(name, sizeof(name), "images/%05d.png", k);
    const fs::path img_path = fs::path(out_dir) / name;
    png_write(img_path.string(), render.image);

    json entry;
    entry["index"] = k;
    entry["family"] = family_name(family);
    entry["params"] = spec.params;
    entry["viewpoint"] = {
        {"pitch", spec.viewpoint.pitch}, {"yaw", spec.viewpoint.yaw}, {"roll", spec.viewpoint.roll}};
    sidecar.push_back(std::move(entry));
    files.push_back(std::string(name));
  }

  const fs::path sidecar_path = fs::path(out_dir) / "sidecar.json";
  {
    std::ofstream out(sidecar_path);
    out << sidecar.dump(1) << "\n";
  }

  json manifest;
  manifest["version"] = 1;
  manifest["family"] = family_name(family);
  manifest["n"] = n;
  manifest["seed"] = seed;
  manifest["grid_level"] = local.grid_level;
  manifest["blur"] = local.blur;
  manifest["angular_scale"] = local.angular_scale;
  manifest["max_radius"] = local.max_radius;
  manifest["identity_seed"] = local.identity_seed;
  manifest["identity_alpha_scale"] = local.identity_alpha_scale;
  manifest["camera"] = {{"focal", local.camera.focal},
                        {"image_size", local.camera.image_size},
                        {"half_extent", local.camera.half_extent}};
  manifest["viewpoint"] = {{"pitch_range_deg", dist.pitch_range_deg},
                           {"yaw_range_deg", dist.yaw_range_deg},
                           {"roll_range_deg", dist.roll_range_deg},
                           {"order", dist.order == RotationOrder::kXY ? "xy" : "yx"}};
  manifest["files"] = files;
  manifest["sidecar"] = "sidecar.json";
  manifest["config_hash"] = sha256_hex(manifest.dump());

  const fs::path manifest_path = fs::path(out_dir) / "manifest.json";
  {
    std::ofstream out(manifest_path);
    out << manifest.dump(1) << "\n";
  }
  return DatasetPaths{out_dir, manifest_path.string(), sidecar_path.string()};
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("load_dataset: missing manifest in " + dir);
  json manifest = json::parse(mf);

  Dataset data;
  data.dir = dir;
  data.config.grid_level = manifest.value("grid_level", 5);
  data.config.blur = manifest.value("blur", 1.0);
  data.config.angular_scale = manifest.value("angular_scale", 0.2);
  data.config.max_radius = manifest.value("max_radius", 1.0);
  data.config.identity_seed = manifest.value("identity_seed", uint64_t{2026});
  data.config.identity_alpha_scale = manifest.value("identity_alpha_scale", 0.02);
  if (manifest.contains("camera")) {
    data.config.camera.focal = manifest["camera"].value("focal", 6.0);
    data.config.camera.image_size = manifest["camera"].value("image_size", 32);
    data.config.camera.half_extent = manifest["camera"].value("half_extent", 1.5);
  }
  if (manifest.contains("viewpoint")) {
    data.config.viewpoint.pitch_range_deg = manifest["viewpoint"].value("pitch_range_deg", 15.0);
    data.config.viewpoint.yaw_range_deg = manifest["viewpoint"].value("yaw_range_deg", 65.0);
    data.config.viewpoint.roll_range_deg = manifest["viewpoint"].value("roll_range_deg", 0.0);
    data.config.viewpoint.order = manifest["viewpoint"].value("order", "xy") == std::string("yx")
                                      ? RotationOrder::kYX
                                      : RotationOrder::kXY;
  }
  for (const auto& name : manifest["files"]) {
    data.images.push_back(png_read((fs::path(dir) / name.get<std::string>()).string()));
  }
  std::ifstream sf(fs::path(dir) / manifest.value("sidecar", "sidecar.json"));
  if (sf) {
    json sidecar = json::parse(sf);
    for (const auto& entry : sidecar) {
      SyntheticScene s;
      s.index = entry.value("index", 0);
      s.family = family_from_name(entry.value("family", "ellipsoids"));
      s.params = entry["params"].get<std::vector<double>>();
      s.viewpoint.pitch = entry["viewpoint"].value("pitch", 0.0);
      s.viewpoint.yaw = entry["viewpoint"].value("yaw", 0.0);
      s.viewpoint.roll = entry["viewpoint"].value("roll", 0.0);
      data.sidecar.push_back(std::move(s));
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Identity generator

IdentityGenerator::IdentityGenerator(const ModelConfig& cfg, uint64_t seed, double max_radius,
                                     double alpha_scale)
    : cfg_(cfg),
      max_radius_(max_radius),
      alpha_scale_(alpha_scale),
      topology_(shared_tessellation(cfg.grid_side(), cfg.grid_side())) {
  if (cfg_.d_object < 48 || cfg_.d_background < 1) {
    throw std::invalid_argument("IdentityGenerator: latent split too small");
  }
  Rng rng(seed);
  // Basis: average stack plus 32 smooth grids, each living on one coarse
  // level so the upsampled field stays low-frequency. The grids are fixed, so
  // their fully upsampled sum collapses to one constant [33, V] matrix.
  const int levels = cfg.grid_level - RadialField::kMinLevel + 1;
  const double per_level = 0.5 / levels;
  const int64_t full_side = cfg.grid_side();
  const int64_t v = topology_->vertex_count();
  basis_matrix_ = Tensor(Shape{RadialField::kBasisCount, v});
  for (int i = 0; i < RadialField::kBasisCount; ++i) {
    for (int n = RadialField::kMinLevel; n <= cfg.grid_level; ++n) {
      const int64_t side = RadialField::level_side(n);
      Tensor grid(Shape{side, side}, i == 0 ? per_level : 0.0);
      const int home_level = i == 0 ? -1 : (i <= 16 ? 3 : 4);
      if (i > 0 && n == std::min(home_level, cfg.grid_level)) {
        Rng basis_rng = rng.fork(static_cast<uint64_t>(i));
        for (int64_t k = 0; k < grid.size(); ++k) grid[k] = basis_rng.normal();
      }
      const Tensor up = upsample_bilinear(grid, full_side);
      for (int64_t k = 0; k < v; ++k) basis_matrix_[i * v + k] += up[k];
    }
  }
  const int64_t tex_dims = 16;
  tex_base_ = Tensor(Shape{v * 3});
  tex_patterns_ = Tensor(Shape{tex_dims, v * 3});
  Rng tex_rng = rng.fork(1000);
  for (int c = 0; c < 3; ++c) {
    double a[3], b[3], ph[3], amp[3];
    for (int k = 0; k < 3; ++k) {
      a[k] = 1.0 + tex_rng.uniform_int(2);
      b[k] = static_cast<double>(tex_rng.uniform_int(4));
      ph[k] = tex_rng.uniform(0.0, kTwoPi);
      amp[k] = tex_rng.uniform(0.4, 0.9);
    }
    for (int64_t vi = 0; vi < v; ++vi) {
      double s = 0;
      for (int k = 0; k < 3; ++k) {
        s += amp[k] * std::cos(a[k] * topology_->theta[static_cast<size_t>(vi)] +
                               b[k] * topology_->phi[static_cast<size_t>(vi)] + ph[k]);
      }
      tex_base_[vi * 3 + c] = s;
    }
  }
  for (int64_t k = 0; k < tex_dims; ++k) {
    Rng prng = rng.fork(2000 + static_cast<uint64_t>(k));
    for (int c = 0; c < 3; ++c) {
      const double a = 1.0 + prng.uniform_int(2);
      const double b = static_cast<double>(prng.uniform_int(4));
      const double ph = prng.uniform(0.0, kTwoPi);
      const double amp = prng.uniform(0.3, 0.7);
      for (int64_t vi = 0; vi < v; ++vi) {
        tex_patterns_[k * v * 3 + vi * 3 + c] =
            amp * std::cos(a * topology_->theta[static_cast<size_t>(vi)] +
                           b * topology_->phi[static_cast<size_t>(vi)] + ph);
      }
    }
  }

  const int64_t s = cfg.bg_texture_side;
  bg_base_ = Tensor(Shape{s * s * 3});
  bg_patterns_ = Tensor(Shape{cfg.d_background, s * s * 3});
  Rng bg_rng = rng.fork(3000);
  auto bg_field = [&](Rng& r, double amp_lo, double amp_hi, int64_t row, Tensor& dst) {
    for (int c = 0; c < 3; ++c) {
      const double ax = r.uniform(0.5, 2.0), ay = r.uniform(0.5, 2.0);
      const double ph = r.uniform(0.0, kTwoPi);
      const double amp = r.uniform(amp_lo, amp_hi);
      for (int64_t i = 0; i < s; ++i) {
        for (int64_t j = 0; j < s; ++j) {
          dst[row * s * s * 3 + (i * s + j) * 3 + c] =
              amp * std::cos(kTwoPi * (ax * i + ay * j) / static_cast<double>(s) + ph);
        }
      }
    }
  };
  bg_field(bg_rng, 0.5, 1.0, 0, bg_base_);
  for (int64_t k = 0; k < cfg.d_background; ++k) {
    Rng prng = rng.fork(4000 + static_cast<uint64_t>(k));
    bg_field(prng, 0.3, 0.7, k, bg_patterns_);
  }
}

SceneVars IdentityGenerator::forward(const Var& z) const {
  if (z.shape().size() != 2 || z.shape()[1] != cfg_.d()) {
    throw std::invalid_argument("IdentityGenerator::forward: expected [N,d] latents");
  }
  const int64_t n = z.shape()[0];
  const int64_t v = topology_->vertex_count();
  SceneVars out;
  Var alphas = mul_scalar(slice(z, 1, 0, 32), alpha_scale_);  // [N,32]
  out.rho = radial_maps_from_alphas(alphas, constant(basis_matrix_), cfg_.radial_floor,
                                    max_radius_);

  Var z_tex = slice(z, 1, 32, 16);                        // [N,16]
  Var tex = sigmoid(add_rows(matmul(z_tex, constant(tex_patterns_)), constant(tex_base_)));
  Var z_bg = slice(z, 1, cfg_.d_object, cfg_.d_background);
  Var bg = sigmoid(add_rows(matmul(z_bg, constant(bg_patterns_)), constant(bg_base_)));

  for (int64_t k = 0; k < n; ++k) {
    out.positions.push_back(spherical_positions_var(out.rho[static_cast<size_t>(k)], *topology_));
    out.colors.push_back(reshape(slice(tex, 0, k, 1), Shape{v, 3}));
    out.background.push_back(reshape(slice(bg, 0, k, 1),
                                     Shape{cfg_.bg_texture_side, cfg_.bg_texture_side, 3}));
  }
  return out;
}

Tensor IdentityGenerator::radial_map(const Tensor& z) const {
  Tensor z_row = z.rank() == 2 ? z : z.reshaped(Shape{1, z.size()});
  SceneVars vars = forward(constant(z_row));
  const int side = cfg_.grid_side();
  return vars.rho[0].value().reshaped(Shape{side, side});
}

// ---------------------------------------------------------------------------
// Wrapper generators

PreRotatedGenerator::PreRotatedGenerator(std::shared_ptr<const GeneratorBase> inner,
                                         double yaw_rad)
    : inner_(std::move(inner)) {
  const Mat3 r = rotation_matrix(Viewpoint{0.0, yaw_rad, 0.0}, RotationOrder::kXY);
  rotation_t_ = Tensor(Shape{3, 3});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) rotation_t_[3 * i + j] = r(j, i);  // transpose
  }
}

SceneVars PreRotatedGenerator::forward(const Var& z) const {
  SceneVars vars = inner_->forward(z);
  for (auto& p : vars.positions) {
    p = matmul(p, constant(rotation_t_));  // row vectors times R^T
  }
  return vars;
}

ConstantSphereGenerator::ConstantSphereGenerator(const ModelConfig& cfg, double radius)
    : cfg_(cfg),
      radius_(radius),
      topology_(shared_tessellation(cfg.grid_side(), cfg.grid_side())) {}

SceneVars ConstantSphereGenerator::forward(const Var& z) const {
  const int64_t n = z.shape()[0];
  const int64_t v = topology_->vertex_count();
  SceneVars out;
  for (int64_t k = 0; k < n; ++k) {
    Var rho = constant(Tensor(Shape{v}, radius_));
    out.rho.push_back(rho);
    out.positions.push_back(spherical_positions_var(rho, *topology_));
    out.colors.push_back(constant(Tensor(Shape{v, 3}, 0.5)));
    out.background.push_back(
        constant(Tensor(Shape{cfg_.bg_texture_side, cfg_.bg_texture_side, 3}, 0.5)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Probes

SceneRepresentation depth_inverted_scene(const SceneRepresentation& scene) {
  const int v = scene.surface.vertex_count();
  Tensor rho = radial_distances(scene.surface);
  double mean = 0;
  for (int i = 0; i < v; ++i) mean += rho[i];
  mean /= static_cast<double>(v);
  double max_delta = 0;
  for (int i = 0; i < v; ++i) max_delta = std::max(max_delta, std::abs(mean - rho[i]));
  // A constant radial map reflects onto itself; keep that case bit-exact.
  if (max_delta <= 1e-12 * std::max(mean, 1.0)) return scene;
  SceneRepresentation inv = scene;
  for (int i = 0; i < v; ++i) {
    const double r = rho[i];
    const double r_inv = std::max(2.0 * mean - r, 0.01);
    const double scale = r > 0 ? r_inv / r : 0.0;
    for (int c = 0; c < 3; ++c) inv.surface.positions[3 * i + c] *= scale;
  }
  return inv;
}

double hollow_mask_gap(const SceneRepresentation& scene, const Viewpoint& v,
                       const HarnessConfig& cfg) {
  const RenderSettings settings = cfg.render_settings();
  const Tensor a = rasterize(scene, v, settings).image;
  const Tensor b = rasterize(depth_inverted_scene(scene), v, settings).image;
  // L2 gap normalized by image contrast (the mean-free norm), so a uniform
  // brightness offset does not drown the geometry signal.
  double mean = 0;
  for (int64_t i = 0; i < a.size(); ++i) mean += a[i];
  mean /= static_cast<double>(a.size());
  double num = 0, den = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += (a[i] - mean) * (a[i] - mean);
  }
  return den > 0 ? std::sqrt(num / den) : 0.0;
}

HollowMaskReport hollow_mask_probe(const SceneRepresentation& scene,
                                   const ViewpointDistribution& dist, const HarnessConfig& cfg,
                                   int n_views) {
  HollowMaskReport report;
  const double range = dist.yaw_range_deg;
  for (int k = 0; k < n_views; ++k) {
    const double yaw_deg = n_views > 1 ? -range + 2.0 * range * k / (n_views - 1) : 0.0;
    Viewpoint v;
    v.yaw = deg_to_rad(yaw_deg);
    report.yaw_deg.push_back(yaw_deg);
    report.gaps.push_back(hollow_mask_gap(scene, v, cfg));
  }
  return report;
}

ReferenceAmbiguityReport reference_ambiguity_probe(const GeneratorBase& generator,
                                                   const GeneratorBase& reference, int n_samples,
                                                   uint64_t seed, const HarnessConfig& cfg,
                                                   double yaw_step_deg) {
  Rng rng(seed);
  const RenderSettings settings = cfg.render_settings();
  ReferenceAmbiguityReport report;
  const double range = cfg.viewpoint.yaw_range_deg;
  for (int s = 0; s < n_samples; ++s) {
    Tensor z = rng.normal_tensor(Shape{1, generator.config().d()});
    const SceneRepresentation ref_scene =
        reference.scene_for(z, cfg.angular_scale, cfg.camera);
    const Tensor ref_img = rasterize(ref_scene, Viewpoint{}, settings).image;
    const SceneRepresentation gen_scene =
        generator.scene_for(z, cfg.angular_scale, cfg.camera);

    double best = std::numeric_limits<double>::infinity();
    double worst = 0;
    double best_yaw = 0;
    for (double yaw = -range; yaw <= range + 1e-9; yaw += yaw_step_deg) {
      Viewpoint v;
      v.yaw = deg_to_rad(yaw);
      const Tensor img = rasterize(gen_scene, v, settings).image;
      double d = 0;
      for (int64_t i = 0; i < img.size(); ++i) {
        d += (img[i] - ref_img[i]) * (img[i] - ref_img[i]);
      }
      d = std::sqrt(d);
      if (d < best) {
        best = d;
        best_yaw = yaw;
      }
      worst = std::max(worst, d);
    }
    // Flat registration curves mean the object carries no frame information.
    if (worst <= 0 || (worst - best) / worst < 0.05) {
      report.undefined_samples++;
      continue;
    }
    // The object appearing pre-rotated by +delta registers at yaw -delta.
    report.offsets_deg.push_back(-best_yaw);
  }
  if (!report.offsets_deg.empty()) {
    report.defined = true;
    std::vector<double> sorted = report.offsets_deg;
    std::sort(sorted.begin(), sorted.end());
    report.median_offset_deg = sorted[sorted.size() / 2];
  }
  return report;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

std::pair<double, int> yaw_registered_radial_error(const Tensor& rho_a, const Tensor& rho_b) {
  if (rho_a.shape() != rho_b.shape() || rho_a.rank() != 2) {
    throw std::invalid_argument("yaw_registered_radial_error: expected equal square grids");
  }
  const int64_t rows = rho_a.dim(0), cols = rho_a.dim(1);
  double best = std::numeric_limits<double>::infinity();
  int best_shift = 0;
  for (int64_t s = 0; s < cols; ++s) {
    double mae = 0;
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < cols; ++j) {
        mae += std::abs(rho_a.at(i, j) - rho_b.at(i, (j + s) % cols));
      }
    }
    mae /= static_cast<double>(rows * cols);
    if (mae < best) {
      best = mae;
      best_shift = static_cast<int>(s);
    }
  }
  return {best, best_shift};
}

double nearest_training_distance(const std::vector<Tensor>& generated,
                                 const std::vector<Tensor>& training) {
  if (generated.empty() || training.empty()) {
    throw std::invalid_argument("nearest_training_distance: empty sets");
  }
  double total = 0;
  for (const Tensor& g : generated) {
    double best = std::numeric_limits<double>::infinity();
    for (const Tensor& t : training) {
      double d = 0;
      for (int64_t i = 0; i < g.size(); ++i) d += std::abs(g[i] - t[i]);
      best = std::min(best, d / static_cast<double>(g.size()));
    }
    total += best;
  }
  return total / static_cast<double>(generated.size());
}

Tensor normal_map_colors(const SurfaceMesh& mesh) {
  const int v = mesh.vertex_count();
  const auto& tris = mesh.topology->triangles;
  Tensor acc(Shape{v, 3});
  for (const auto& tri : tris) {
    auto p = [&](int k) {
      const int vi = tri[static_cast<size_t>(k)];
      return Vec3{mesh.positions[3 * vi], mesh.positions[3 * vi + 1],
                  mesh.positions[3 * vi + 2]};
    };
    const Vec3 n = cross(p(1) - p(0), p(2) - p(0));  // area-weighted
    for (int k = 0; k < 3; ++k) {
      const int vi = tri[static_cast<size_t>(k)];
      acc[3 * vi + 0] += n.x;
      acc[3 * vi + 1] += n.y;
      acc[3 * vi + 2] += n.z;
    }
  }
  Tensor colors(Shape{v, 3});
  for (int i = 0; i < v; ++i) {
    Vec3 n{acc[3 * i], acc[3 * i + 1], acc[3 * i + 2]};
    const double len = norm(n);
    if (len > 0) n = (1.0 / len) * n;
    colors[3 * i + 0] = 0.5 * (n.x + 1.0);
    colors[3 * i + 1] = 0.5 * (n.y + 1.0);
    colors[3 * i + 2] = 0.5 * (n.z + 1.0);
  }
  return colors;
}

Tensor render_plain(const SceneRepresentation& scene, const Viewpoint& v,
                    const HarnessConfig& cfg) {
  return rasterize(scene, v, cfg.render_settings()).image;
}

}  // namespace starmesh
