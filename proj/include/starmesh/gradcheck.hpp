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

#include <string>
#include <vector>

#include "starmesh/renderer.hpp"

namespace starmesh {

struct GradcheckOptions {
  uint64_t seed = 1;
  int triangle_count = 60;
  int image_size = 24;
  double blur_width = 1.0;
  // Central-difference steps per slot. Positions/viewpoint use tiny steps so
  // the probe stays on one smooth piece of the ramped coverage.
  double step_positions = 1e-6;
  double step_colors = 1e-5;
  double step_background = 1e-5;
  double step_viewpoint = 1e-7;
  int samples_per_slot = 24;
  int silhouette_samples = 12;
};

struct GradcheckSlot {
  std::string name;
  double max_rel_error = 0;
  int entries = 0;
};

struct GradcheckReport {
  std::vector<GradcheckSlot> slots;
  double max_rel_error = 0;

  bool all_below(double threshold) const;
  double slot_error(const std::string& name) const;  // -1 if missing
};

struct GradcheckScene {
  SceneRepresentation scene;
  Viewpoint view;
  RenderSettings settings;
};

// Random triangle-soup scene with a smooth random background.
GradcheckScene make_gradcheck_scene(uint64_t seed, int triangle_count, int image_size,
                                    double blur_width);

// Compares rasterize_backward against central differences of a fixed random
// pixel weighting, per gradient slot. The `silhouette_positions` slot samples
// coordinates of vertices projected near the coverage boundary; with
// blur_width == 0 those are exactly the entries whose analytic gradient
// vanishes while the finite difference does not.
GradcheckReport gradcheck(const SceneRepresentation& scene, const Viewpoint& v,
                          const RenderSettings& settings, const GradcheckOptions& opts);

GradcheckReport gradcheck_random(const GradcheckOptions& opts);

}  // namespace starmesh
