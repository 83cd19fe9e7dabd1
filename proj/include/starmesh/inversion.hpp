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

#include "starmesh/networks.hpp"

namespace starmesh {

struct InversionOptions {
  int iterations = 500;
  double lr = 1e-2;
  int multi_starts = 8;
  double z_penalty = 1e-3;  // weak pull toward the Gaussian's high-density region
  uint64_t seed = 0;
  int threads = 4;  // multi-starts are independent and run concurrently
  double angular_scale = 0.2;
  RenderSettings render;
};

struct InversionCandidate {
  Tensor z;
  Viewpoint view;
  double residual = 0;  // RMS per pixel-channel
};

// Uniform viewpoint grid over the support crossed with N(0,I) latents,
// ranked by forward residual (best first). n_starts == 1 degenerates to the
// center viewpoint.
std::vector<InversionCandidate> invert_grid_init(const Tensor& target,
                                                 const GeneratorBase& generator,
                                                 const ViewpointDistribution& dist, int n_starts,
                                                 const InversionOptions& opts);

struct InversionResult {
  Tensor z;
  Viewpoint view;
  double residual = 0;
  int iterations = 0;
  int divergent_starts = 0;
  SceneRepresentation scene;  // G(z*)
  std::vector<double> residual_history;  // best-so-far, non-increasing
};

// Projected gradient-based minimization of |target - R(G(z), v)|^2 with v
// clamped into the support after every step; returns the best multi-start.
InversionResult invert(const Tensor& target, const GeneratorBase& generator,
                       const ViewpointDistribution& dist, const InversionOptions& opts);

double image_rms(const Tensor& a, const Tensor& b);

}  // namespace starmesh
