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

#include "starmesh/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace starmesh {

namespace {

constexpr double kLeakySlope = 0.2;

}  // namespace

SceneRepresentation GeneratorBase::scene_for(const Tensor& z, double angular_scale,
                                             const CameraIntrinsics& camera) const {
  Tensor z_row = z.rank() == 2 ? z : z.reshaped(Shape{1, z.size()});
  SceneVars vars = forward(constant(z_row));
  SceneRepresentation scene;
  scene.surface.topology = topology();
  scene.surface.positions = vars.positions[0].value();
  scene.texture = vars.colors[0].value();
  scene.background = make_background(vars.background[0].value(), angular_scale, camera);
  return scene;
}

Var radial_basis_matrix(const std::vector<std::vector<Var>>& basis, int grid_level) {
  if (static_cast<int>(basis.size()) != RadialField::kBasisCount) {
    throw std::invalid_argument("radial_basis_matrix: expected 33 basis stacks");
  }
  const int64_t side = RadialField::level_side(grid_level);
  const int64_t cells = side * side;
  std::vector<Var> rows;
  rows.reserve(RadialField::kBasisCount);
  for (int i = 0; i < RadialField::kBasisCount; ++i) {
    Var acc;
    for (int n = RadialField::kMinLevel; n <= grid_level; ++n) {
      const Var& g =
          basis[static_cast<size_t>(i)][static_cast<size_t>(n - RadialField::kMinLevel)];
      Var lifted = (RadialField::level_side(n) == side)
                       ? g
                       : apply_map(g, upsample_map(RadialField::level_side(n), side));
      acc = acc.defined() ? add(acc, lifted) : lifted;
    }
    rows.push_back(reshape(acc, Shape{1, cells}));
  }
  return concat0(rows);
}

std::vector<Var> radial_maps_from_alphas(const Var& alphas_batch, const Var& basis_matrix,
                                         double radial_floor, double max_radius) {
  if (alphas_batch.shape().size() != 2 || alphas_batch.shape()[1] != 32) {
    throw std::invalid_argument("radial_maps_from_alphas: expected [N,32] coefficients");
  }
  const int64_t n = alphas_batch.shape()[0];
  const int64_t cells = basis_matrix.shape()[1];
  Var learned = slice(basis_matrix, 0, 1, 32);
  Var average = reshape(slice(basis_matrix, 0, 0, 1), Shape{cells});
  // Row 0 carries the pinned unit coefficient; the rest mix linearly.
  Var rho_batch = add_rows(matmul(alphas_batch, learned), average);  // [N, cells]
  std::vector<Var> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k) {
    Var flat = reshape(slice(rho_batch, 0, k, 1), Shape{cells});
    if (radial_floor > 0) {
      // rho = floor + softplus(rho - floor): identity-like above the floor,
      // strictly positive everywhere.
      flat = add_scalar(softplus(add_scalar(flat, -radial_floor)), radial_floor);
    }
    out.push_back(enforce_scale_var(flat, max_radius));
  }
  return out;
}

Var assemble_radial_map(const Var& alphas32, const std::vector<std::vector<Var>>& basis,
                        int grid_level, double radial_floor, double max_radius) {
  if (alphas32.shape() != Shape{32}) {
    throw std::invalid_argument("assemble_radial_map: expected 32 coefficients");
  }
  Var batch = reshape(alphas32, Shape{1, 32});
  return radial_maps_from_alphas(batch, radial_basis_matrix(basis, grid_level), radial_floor,
                                 max_radius)[0];
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(const ModelConfig& cfg, double max_radius, Rng& rng)
    : cfg_(cfg),
      max_radius_(max_radius),
      topology_(shared_tessellation(cfg.grid_side(), cfg.grid_side())),
      alpha_head_(cfg.d_object, 32, rng),
      tex_seed_(cfg.d_object, 4 * cfg.gen_channels * 3 * 3, rng),
      bg_seed_(cfg.d_background, 4 * cfg.gen_channels * 4 * 4, rng) {
  // Hierarchical basis grids; the average stack starts at a 0.5-radius
  // sphere, learned grids start near zero.
  basis_.resize(RadialField::kBasisCount);
  const int levels = cfg.grid_level - RadialField::kMinLevel + 1;
  const double per_level = 0.5 / levels;
  for (int i = 0; i < RadialField::kBasisCount; ++i) {
    for (int n = RadialField::kMinLevel; n <= cfg.grid_level; ++n) {
      const int64_t side = RadialField::level_side(n);
      Tensor init = i == 0 ? Tensor(Shape{side, side}, per_level)
                           : rng.normal_tensor(Shape{side, side}, cfg.basis_init_stddev);
      basis_[static_cast<size_t>(i)].push_back(parameter(std::move(init)));
    }
  }

  const int c = cfg.gen_channels;
  // Texture: 3 -> 5 -> 9 -> 17 -> 33 (kernel 3, stride 2, pad 1 doubles
  // side-1), ending in RGB.
  tex_deconvs_.emplace_back(4 * c, 2 * c, 3, 2, 1, rng);
  tex_deconvs_.emplace_back(2 * c, c, 3, 2, 1, rng);
  tex_deconvs_.emplace_back(c, c, 3, 2, 1, rng);
  tex_deconvs_.emplace_back(c, 3, 3, 2, 1, rng);
  if (cfg.grid_side() != 33) {
    throw std::invalid_argument("Generator: texture stack is built for grid_level 5 (33x33)");
  }
  // Background: 4 -> ... -> bg_texture_side (kernel 4, stride 2, pad 1).
  int side = 4;
  int64_t ch = 4 * c;
  while (side < cfg.bg_texture_side) {
    const int64_t next_ch = side * 2 >= cfg.bg_texture_side ? 3 : std::max<int64_t>(ch / 2, c);
    bg_deconvs_.emplace_back(ch, next_ch, 4, 2, 1, rng);
    ch = next_ch;
    side *= 2;
  }
  if (side != cfg.bg_texture_side) {
    throw std::invalid_argument("Generator: bg_texture_side must be 4*2^k");
  }
}

Var Generator::alpha_head(const Var& z_object) const { return alpha_head_.forward(z_object); }

SceneVars Generator::forward(const Var& z) const {
  if (z.shape().size() != 2 || z.shape()[1] != cfg_.d()) {
    throw std::invalid_argument("Generator::forward: expected [N,d] latents");
  }
  const int64_t n = z.shape()[0];
  Var z_o = slice(z, 1, 0, cfg_.d_object);
  Var z_b = slice(z, 1, cfg_.d_object, cfg_.d_background);

  Var alphas = alpha_head_.forward(z_o);  // [N,32]

  const int c = cfg_.gen_channels;
  Var tex = reshape(tex_seed_.forward(z_o), Shape{n, 3, 3, 4 * c});
  for (size_t i = 0; i < tex_deconvs_.size(); ++i) {
    tex = tex_deconvs_[i].forward(i == 0 ? tex : leaky_relu(tex, kLeakySlope));
  }
  tex = sigmoid(tex);  // [N,33,33,3]

  Var bg = reshape(bg_seed_.forward(z_b), Shape{n, 4, 4, 4 * c});
  for (size_t i = 0; i < bg_deconvs_.size(); ++i) {
    bg = bg_deconvs_[i].forward(i == 0 ? bg : leaky_relu(bg, kLeakySlope));
  }
  bg = sigmoid(bg);  // [N,S,S,3]

  const int64_t v = topology_->vertex_count();
  SceneVars out;
  out.rho = radial_maps_from_alphas(alphas, radial_basis_matrix(basis_, cfg_.grid_level),
                                    cfg_.radial_floor, max_radius_);
  for (int64_t k = 0; k < n; ++k) {
    out.positions.push_back(spherical_positions_var(out.rho[static_cast<size_t>(k)], *topology_));
    out.colors.push_back(reshape(slice(tex, 0, k, 1), Shape{v, 3}));
    out.background.push_back(reshape(slice(bg, 0, k, 1),
                                     Shape{cfg_.bg_texture_side, cfg_.bg_texture_side, 3}));
  }
  return out;
}

std::vector<NamedParam> Generator::params() const {
  std::vector<NamedParam> out;
  auto append = [&out](std::vector<NamedParam> ps) {
    for (auto& p : ps) out.push_back(std::move(p));
  };
  append(alpha_head_.params("gen.alpha_head"));
  for (int i = 0; i < RadialField::kBasisCount; ++i) {
    for (size_t l = 0; l < basis_[static_cast<size_t>(i)].size(); ++l) {
      out.push_back({"gen.basis." + std::to_string(i) + "." + std::to_string(l),
                     basis_[static_cast<size_t>(i)][l]});
    }
  }
  append(tex_seed_.params("gen.tex_seed"));
  for (size_t i = 0; i < tex_deconvs_.size(); ++i) {
    append(tex_deconvs_[i].params("gen.tex_deconv" + std::to_string(i)));
  }
  append(bg_seed_.params("gen.bg_seed"));
  for (size_t i = 0; i < bg_deconvs_.size(); ++i) {
    append(bg_deconvs_[i].params("gen.bg_deconv" + std::to_string(i)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Critic

Critic::Critic(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int64_t c = cfg.channels;
  convs_.emplace_back(3, c, 4, 2, 1, rng);
  convs_.emplace_back(c, 2 * c, 4, 2, 1, rng);
  convs_.emplace_back(2 * c, 4 * c, 4, 2, 1, rng);
  convs_.emplace_back(4 * c, 4 * c, 4, 2, 1, rng);
  const int64_t final_side = cfg.image_size / 16;
  if (final_side < 1) throw std::invalid_argument("Critic: image_size must be >= 16");
  head_ = Linear(4 * c * final_side * final_side, 1, rng);
}

Var Critic::forward(const Var& images_nhwc) const {
  const Shape& s = images_nhwc.shape();
  if (s.size() != 4 || s[1] != cfg_.image_size || s[3] != 3) {
    throw std::invalid_argument("Critic::forward: expected [N,H,W,3] images");
  }
  Var h = images_nhwc;
  for (const auto& conv : convs_) h = leaky_relu(conv.forward(h), kLeakySlope);
  const int64_t n = s[0];
  return head_.forward(reshape(h, Shape{n, h.size() / n}));
}

std::vector<NamedParam> Critic::params() const {
  std::vector<NamedParam> out;
  for (size_t i = 0; i < convs_.size(); ++i) {
    for (auto& p : convs_[i].params("critic.conv" + std::to_string(i))) out.push_back(p);
  }
  for (auto& p : head_.params("critic.head")) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

Tensor Encoder::bin_centers(double range_rad, int bins) {
  Tensor c(Shape{bins, 1});
  for (int b = 0; b < bins; ++b) {
    c[b] = -range_rad + (2.0 * range_rad) * (b + 0.5) / bins;
  }
  return c;
}

Encoder::Encoder(const ModelConfig& cfg, const ViewpointDistribution& dist, Rng& rng)
    : cfg_(cfg), dist_(dist) {
  const int64_t c = cfg.channels;
  convs_.emplace_back(3, c, 4, 2, 1, rng);
  convs_.emplace_back(c, 2 * c, 4, 2, 1, rng);
  convs_.emplace_back(2 * c, 4 * c, 4, 2, 1, rng);
  convs_.emplace_back(4 * c, 4 * c, 4, 2, 1, rng);
  const int64_t final_side = cfg.image_size / 16;
  if (final_side < 1) throw std::invalid_argument("Encoder: image_size must be >= 16");
  const int64_t feat = 128;
  feature_ = Linear(4 * c * final_side * final_side, feat, rng);
  z_head_ = Linear(feat, cfg.d(), rng);

  const double ranges[3] = {deg_to_rad(dist.pitch_range_deg), deg_to_rad(dist.yaw_range_deg),
                            deg_to_rad(dist.roll_range_deg)};
  for (int a = 0; a < 3; ++a) {
    angle_active_[static_cast<size_t>(a)] = ranges[a] > 0;
    if (angle_active_[static_cast<size_t>(a)]) {
      angle_heads_[static_cast<size_t>(a)] = Linear(feat, cfg.angle_bins, rng);
      centers_[static_cast<size_t>(a)] = bin_centers(ranges[a], cfg.angle_bins);
    }
  }
}

EncoderOutput Encoder::forward(const Var& images_nhwc) const {
  const Shape& s = images_nhwc.shape();
  if (s.size() != 4 || s[1] != cfg_.image_size || s[3] != 3) {
    throw std::invalid_argument("Encoder::forward: expected [N,H,W,3] images");
  }
  const int64_t n = s[0];
  Var h = images_nhwc;
  for (const auto& conv : convs_) h = leaky_relu(conv.forward(h), kLeakySlope);
  Var feat = leaky_relu(feature_.forward(reshape(h, Shape{n, h.size() / n})), kLeakySlope);

  EncoderOutput out;
  out.z = z_head_.forward(feat);
  for (int a = 0; a < 3; ++a) {
    if (!angle_active_[static_cast<size_t>(a)]) {
      out.angles[static_cast<size_t>(a)] = constant(Tensor(Shape{n}));
      continue;
    }
    Var logits = angle_heads_[static_cast<size_t>(a)].forward(feat);  // [N,B]
    out.logits[static_cast<size_t>(a)] = logits;
    Var probs = softmax_rows(logits);
    // Expectation over bin centers keeps the estimate inside the support.
    out.angles[static_cast<size_t>(a)] =
        reshape(matmul(probs, constant(centers_[static_cast<size_t>(a)])), Shape{n});
  }
  return out;
}

std::vector<NamedParam> Encoder::params() const {
  std::vector<NamedParam> out;
  for (size_t i = 0; i < convs_.size(); ++i) {
    for (auto& p : convs_[i].params("enc.conv" + std::to_string(i))) out.push_back(p);
  }
  for (auto& p : feature_.params("enc.feature")) out.push_back(p);
  for (auto& p : z_head_.params("enc.z_head")) out.push_back(p);
  for (int a = 0; a < 3; ++a) {
    if (!angle_active_[static_cast<size_t>(a)]) continue;
    for (auto& p : angle_heads_[static_cast<size_t>(a)].params("enc.angle_head" +
                                                               std::to_string(a))) {
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace starmesh
