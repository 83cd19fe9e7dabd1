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
#include <memory>

#include "starmesh/camera.hpp"
#include "starmesh/geometry.hpp"
#include "starmesh/nn.hpp"
#include "starmesh/renderer.hpp"

namespace starmesh {

struct ModelConfig {
  int64_t d_object = 48;     // latent split: surface+texture part
  int64_t d_background = 16; // background part
  int grid_level = 5;        // radial/texture grids are (2^level+1)^2
  int image_size = 32;
  int bg_texture_side = 64;
  int channels = 16;         // trunk width for critic/encoder
  int gen_channels = 16;
  int angle_bins = 21;
  double basis_init_stddev = 0.01;
  double radial_floor = 0.05;  // smooth positivity floor on composed radii

  int64_t d() const { return d_object + d_background; }
  int grid_side() const { return (1 << grid_level) + 1; }
};

// Differentiable per-sample scene bundle produced by a generator.
struct SceneVars {
  std::vector<Var> rho;         // [V] radial maps, scale already enforced
  std::vector<Var> positions;   // [V,3]
  std::vector<Var> colors;      // [V,3]
  std::vector<Var> background;  // [Hb,Wb,3]
};

class GeneratorBase {
 public:
  virtual ~GeneratorBase() = default;
  virtual SceneVars forward(const Var& z) const = 0;  // z: [N, d]
  virtual std::vector<NamedParam> params() const = 0;
  virtual const ModelConfig& config() const = 0;
  virtual TopologyPtr topology() const = 0;

  // Convenience: plain scene for one latent row.
  SceneRepresentation scene_for(const Tensor& z, double angular_scale,
                                const CameraIntrinsics& camera) const;
};

// Trainable generator: three sub-generators over the split latent.
//  - surface: a fully connected coefficient head (z_o -> 32 alphas) plus the
//    hierarchical basis grids stored directly as parameters,
//  - texture: transposed-convolution stack from z_o to the vertex grid,
//  - background: transposed-convolution stack from z_b.
class Generator : public GeneratorBase {
 public:
  Generator(const ModelConfig& cfg, double max_radius, Rng& rng);

  SceneVars forward(const Var& z) const override;
  std::vector<NamedParam> params() const override;
  const ModelConfig& config() const override { return cfg_; }
  TopologyPtr topology() const override { return topology_; }

  // Exposed for tests: alpha coefficients for a latent batch, [N,32].
  Var alpha_head(const Var& z_object) const;

 private:
  ModelConfig cfg_;
  double max_radius_;
  TopologyPtr topology_;

  Linear alpha_head_;
  std::vector<std::vector<Var>> basis_;  // [33][levels] parameters

  Linear tex_seed_;
  std::vector<ConvTranspose2d> tex_deconvs_;

  Linear bg_seed_;
  std::vector<ConvTranspose2d> bg_deconvs_;
};

class Critic {
 public:
  Critic(const ModelConfig& cfg, Rng& rng);
  Var forward(const Var& images_nhwc) const;  // [N,H,W,3] -> [N,1]
  std::vector<NamedParam> params() const;

 private:
  ModelConfig cfg_;
  std::vector<Conv2d> convs_;
  Linear head_;
};

struct EncoderOutput {
  Var z;                          // [N, d]
  std::array<Var, 3> angles;      // each [N], radians (expectation head)
  std::array<Var, 3> logits;      // each [N, B]; roll head undefined if off
};

// Shared trunk with a latent head and per-angle discretized heads whose
// softmax expectation keeps the estimate inside the support box.
class Encoder {
 public:
  Encoder(const ModelConfig& cfg, const ViewpointDistribution& dist, Rng& rng);
  EncoderOutput forward(const Var& images_nhwc) const;
  std::vector<NamedParam> params() const;
  const ViewpointDistribution& distribution() const { return dist_; }

  // Midpoint grid over [-range, range]; used by the expectation heads.
  static Tensor bin_centers(double range_rad, int bins);

 private:
  ModelConfig cfg_;
  ViewpointDistribution dist_;
  std::vector<Conv2d> convs_;
  Linear feature_;
  Linear z_head_;
  std::array<Linear, 3> angle_heads_;
  std::array<bool, 3> angle_active_{};
  std::array<Tensor, 3> centers_;
};

// Shared generator plumbing. The fully upsampled basis stacks form a
// [33, V] matrix (row 0 is the pinned average term); a whole batch of
// radial maps is then one matmul plus per-sample positivity floor and scale
// constraint.
Var radial_basis_matrix(const std::vector<std::vector<Var>>& basis, int grid_level);
std::vector<Var> radial_maps_from_alphas(const Var& alphas_batch /*[N,32]*/,
                                         const Var& basis_matrix /*[33,V]*/,
                                         double radial_floor, double max_radius);
Var assemble_radial_map(const Var& alphas32, const std::vector<std::vector<Var>>& basis,
                        int grid_level, double radial_floor, double max_radius);

}  // namespace starmesh
