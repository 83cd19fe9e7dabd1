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

#include "starmesh/harness.hpp"
#include "starmesh/inversion.hpp"

using namespace starmesh;

namespace {

struct Fixture {
  HarnessConfig harness;
  ModelConfig model;
  std::shared_ptr<IdentityGenerator> generator;
  InversionOptions opts;

  Fixture() {
    harness.grid_level = 4;
    harness.camera.image_size = 24;
    model.grid_level = harness.grid_level;
    model.image_size = harness.camera.image_size;
    model.bg_texture_side =
        required_background_side(harness.camera, harness.viewpoint, harness.angular_scale);
    generator = std::make_shared<IdentityGenerator>(model, 2026, 1.0, 0.02);
    opts.render = harness.render_settings();
    opts.angular_scale = harness.angular_scale;
  }

  Tensor render_truth(const Tensor& z, const Viewpoint& v) const {
    SceneRepresentation scene =
        generator->scene_for(z, harness.angular_scale, harness.camera);
    return rasterize(scene, v, harness.render_settings()).image;
  }
};

}  // namespace

TEST_CASE("grid init: one start sits at the center viewpoint") {
  Fixture f;
  Rng rng(3);
  Tensor target = f.render_truth(rng.normal_tensor({1, f.model.d()}), Viewpoint{});
  f.opts.seed = 1;
  auto candidates = invert_grid_init(target, *f.generator, f.harness.viewpoint, 1, f.opts);
  REQUIRE(candidates.size() == 1);
  CHECK(candidates[0].view.pitch == 0.0);
  CHECK(candidates[0].view.yaw == 0.0);
}

TEST_CASE("grid init covers the support corners and ranks by residual") {
  Fixture f;
  Rng rng(5);
  Tensor target = f.render_truth(rng.normal_tensor({1, f.model.d()}), Viewpoint{});
  f.opts.seed = 2;
  auto candidates = invert_grid_init(target, *f.generator, f.harness.viewpoint, 16, f.opts);
  REQUIRE(candidates.size() == 16);
  // Ranking is ascending in residual (matches a naive sort of itself).
  for (size_t i = 1; i < candidates.size(); ++i) {
    CHECK(candidates[i - 1].residual <= candidates[i].residual);
  }
  // Corners of the (pitch, yaw) box appear in the full grid.
  const double p = deg_to_rad(f.harness.viewpoint.pitch_range_deg);
  const double y = deg_to_rad(f.harness.viewpoint.yaw_range_deg);
  auto all = invert_grid_init(target, *f.generator, f.harness.viewpoint, 1000, f.opts);
  bool corner = false;
  for (const auto& c : all) {
    if (std::abs(std::abs(c.view.pitch) - p) < 1e-12 &&
        std::abs(std::abs(c.view.yaw) - y) < 1e-12) {
      corner = true;
    }
  }
  CHECK(corner);
}

TEST_CASE("zero-iteration budget returns the best initial candidate") {
  Fixture f;
  Rng rng(7);
  Tensor z = rng.normal_tensor({1, f.model.d()});
  Viewpoint v;
  v.yaw = 0.3;
  Tensor target = f.render_truth(z, v);
  f.opts.iterations = 0;
  f.opts.multi_starts = 4;
  f.opts.seed = 3;
  InversionResult result = invert(target, *f.generator, f.harness.viewpoint, f.opts);
  auto candidates = invert_grid_init(target, *f.generator, f.harness.viewpoint, 4, f.opts);
  CHECK(result.residual == doctest::Approx(candidates[0].residual).epsilon(1e-12));
}

TEST_CASE("inversion recovers a self-rendered identity scene") {
  Fixture f;
  Rng rng(11);
  Tensor z = rng.normal_tensor({1, f.model.d()});
  Viewpoint v;
  v.yaw = deg_to_rad(25.0);
  v.pitch = deg_to_rad(-8.0);
  Tensor target = f.render_truth(z, v);

  f.opts.iterations = 500;
  f.opts.multi_starts = 6;
  f.opts.seed = 4;
  f.opts.threads = 6;
  InversionResult result = invert(target, *f.generator, f.harness.viewpoint, f.opts);
  CHECK(result.residual < 5e-3);
  CHECK(rad_to_deg(std::abs(result.view.yaw - v.yaw)) < 1.5);
  CHECK(rad_to_deg(std::abs(result.view.pitch - v.pitch)) < 1.5);
  // Best-so-far history never increases.
  for (size_t i = 1; i < result.residual_history.size(); ++i) {
    CHECK(result.residual_history[i] <= result.residual_history[i - 1] + 1e-15);
  }
  // Constraint satisfaction: the returned viewpoint lies in the box.
  CHECK(f.harness.viewpoint.contains(result.view));
}

namespace {

// Identity generator with the object shrunk to a point; only the background
// carries viewpoint information.
class PointObjectGenerator : public GeneratorBase {
 public:
  explicit PointObjectGenerator(std::shared_ptr<const GeneratorBase> inner)
      : inner_(std::move(inner)) {}
  SceneVars forward(const Var& z) const override {
    SceneVars vars = inner_->forward(z);
    for (auto& p : vars.positions) p = mul_scalar(p, 1e-4);
    return vars;
  }
  std::vector<NamedParam> params() const override { return {}; }
  const ModelConfig& config() const override { return inner_->config(); }
  TopologyPtr topology() const override { return inner_->topology(); }

 private:
  std::shared_ptr<const GeneratorBase> inner_;
};

}  // namespace

TEST_CASE("pure-background target recovers the shift angles") {
  Fixture f;
  PointObjectGenerator point_gen(f.generator);
  Rng rng(13);
  Tensor z = rng.normal_tensor({1, f.model.d()});
  SceneRepresentation scene =
      point_gen.scene_for(z, f.harness.angular_scale, f.harness.camera);
  Viewpoint v;
  v.yaw = deg_to_rad(31.0);
  v.pitch = deg_to_rad(9.0);
  Tensor target = rasterize(scene, v, f.harness.render_settings()).image;

  f.opts.iterations = 250;
  f.opts.multi_starts = 6;
  f.opts.seed = 5;
  f.opts.threads = 6;
  InversionResult result = invert(target, point_gen, f.harness.viewpoint, f.opts);
  CHECK(rad_to_deg(std::abs(result.view.yaw - v.yaw)) < 1.0);
  CHECK(rad_to_deg(std::abs(result.view.pitch - v.pitch)) < 1.0);
}

TEST_CASE("inversion rejects targets at the wrong resolution") {
  Fixture f;
  Tensor bad(Shape{8, 8, 3});
  CHECK_THROWS_AS(invert(bad, *f.generator, f.harness.viewpoint, f.opts),
                  std::invalid_argument);
}
