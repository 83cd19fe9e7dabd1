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

#include <optional>
#include <string>

#include "starmesh/networks.hpp"
#include "starmesh/renderer.hpp"

namespace starmesh {

enum class SceneFamily { kEllipsoids, kBumpySpheres, kTwoLobe, kIdentity };

std::string family_name(SceneFamily f);
SceneFamily family_from_name(const std::string& name);

struct HarnessConfig {
  int grid_level = 5;
  CameraIntrinsics camera;
  ViewpointDistribution viewpoint;
  double blur = 1.0;
  double angular_scale = 0.2;
  double max_radius = 1.0;
  uint64_t identity_seed = 2026;
  double identity_alpha_scale = 0.02;
  double bumpy_relief_lo = 0.02;
  double bumpy_relief_hi = 0.7;

  RenderSettings render_settings() const {
    return RenderSettings{camera, viewpoint.order, blur};
  }
};

// Everything needed to re-render a stored sample bit-exactly.
struct SyntheticScene {
  SceneFamily family = SceneFamily::kEllipsoids;
  int index = 0;
  std::vector<double> params;  // family-specific; identity stores z here
  Viewpoint viewpoint;
};

// Deterministic parametric scene (star-shaped by construction).
SceneRepresentation realize_scene(const SyntheticScene& spec, const HarnessConfig& cfg);
// Draws family parameters from the per-scene stream (viewpoint excluded).
SyntheticScene sample_scene(SceneFamily family, int index, uint64_t dataset_seed,
                            const HarnessConfig& cfg);

struct DatasetPaths {
  std::string dir;
  std::string manifest;
  std::string sidecar;
};

// Renders n scenes with independent viewpoints into out_dir: PNG images, a
// ground-truth sidecar (never shown to training) and a manifest with seeds
// and a config hash.
DatasetPaths make_dataset(SceneFamily family, int n, const ViewpointDistribution& dist,
                          uint64_t seed, const std::string& out_dir, const HarnessConfig& cfg);

struct Dataset {
  std::string dir;
  std::vector<Tensor> images;
  std::vector<SyntheticScene> sidecar;
  HarnessConfig config;  // reconstructed from the manifest
};
Dataset load_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// Harness generators

// Latent-to-scene map with exact, analytically known ground truth: z directly
// parametrizes the radial coefficients, texture pattern mix and background
// pattern mix. Used wherever tests need a perfectly expressive generator.
class IdentityGenerator : public GeneratorBase {
 public:
  IdentityGenerator(const ModelConfig& cfg, uint64_t seed, double max_radius,
                    double alpha_scale = 0.02);

  SceneVars forward(const Var& z) const override;
  std::vector<NamedParam> params() const override { return {}; }
  const ModelConfig& config() const override { return cfg_; }
  TopologyPtr topology() const override { return topology_; }

  // Ground-truth radial map (post floor and scale constraint) for a latent.
  Tensor radial_map(const Tensor& z) const;

 private:
  ModelConfig cfg_;
  double max_radius_;
  double alpha_scale_;
  TopologyPtr topology_;
  Tensor basis_matrix_;   // [33, V], fully upsampled constant basis
  Tensor tex_base_;       // [V*3]
  Tensor tex_patterns_;   // [16, V*3]
  Tensor bg_base_;        // [S*S*3]
  Tensor bg_patterns_;    // [d_background, S*S*3]
};

// Wraps a generator with a fixed extra yaw rotation of the object; the
// constructed reference-ambiguity case.
class PreRotatedGenerator : public GeneratorBase {
 public:
  PreRotatedGenerator(std::shared_ptr<const GeneratorBase> inner, double yaw_rad);
  SceneVars forward(const Var& z) const override;
  std::vector<NamedParam> params() const override { return inner_->params(); }
  const ModelConfig& config() const override { return inner_->config(); }
  TopologyPtr topology() const override { return inner_->topology(); }

 private:
  std::shared_ptr<const GeneratorBase> inner_;
  Tensor rotation_t_;  // [3,3], transposed rotation for row-vector points
};

// Rotation-invariant object: constant-texture sphere on a constant
// background (the degenerate case for frame registration).
class ConstantSphereGenerator : public GeneratorBase {
 public:
  ConstantSphereGenerator(const ModelConfig& cfg, double radius = 0.5);
  SceneVars forward(const Var& z) const override;
  std::vector<NamedParam> params() const override { return {}; }
  const ModelConfig& config() const override { return cfg_; }
  TopologyPtr topology() const override { return topology_; }

 private:
  ModelConfig cfg_;
  double radius_;
  TopologyPtr topology_;
};

// ---------------------------------------------------------------------------
// Ambiguity probes

struct HollowMaskReport {
  std::vector<double> yaw_deg;
  std::vector<double> gaps;  // normalized L2 between original and inverted render
};

// Reflects the radial map through its mean and compares renders across the
// viewpoint support.
HollowMaskReport hollow_mask_probe(const SceneRepresentation& scene,
                                   const ViewpointDistribution& dist, const HarnessConfig& cfg,
                                   int n_views = 9);
double hollow_mask_gap(const SceneRepresentation& scene, const Viewpoint& v,
                       const HarnessConfig& cfg);
SceneRepresentation depth_inverted_scene(const SceneRepresentation& scene);

struct ReferenceAmbiguityReport {
  bool defined = false;            // false when registration is degenerate
  double median_offset_deg = 0;
  std::vector<double> offsets_deg;  // per defined sample
  int undefined_samples = 0;
};

// Estimates the canonical-frame yaw offset of `generator` against
// `reference` by registering reference frontal renders to yaw sweeps.
ReferenceAmbiguityReport reference_ambiguity_probe(const GeneratorBase& generator,
                                                   const GeneratorBase& reference, int n_samples,
                                                   uint64_t seed, const HarnessConfig& cfg,
                                                   double yaw_step_deg = 2.5);

// ---------------------------------------------------------------------------
// Evaluation helpers

// Mean absolute radial error after integer-azimuth registration (the
// reference ambiguity allows a yaw offset).
std::pair<double, int> yaw_registered_radial_error(const Tensor& rho_a, const Tensor& rho_b);

// Mean (over generated samples) of the distance to the nearest training
// image; distance is the mean absolute per-pixel-channel difference.
double nearest_training_distance(const std::vector<Tensor>& generated,
                                 const std::vector<Tensor>& training);

// Per-vertex normals (area-weighted average of adjacent triangle normals)
// mapped to [0,1]^3 colors; for the sample-grid "normal map" views.
Tensor normal_map_colors(const SurfaceMesh& mesh);

Tensor render_plain(const SceneRepresentation& scene, const Viewpoint& v,
                    const HarnessConfig& cfg);

}  // namespace starmesh
