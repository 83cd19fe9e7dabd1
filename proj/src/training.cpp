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

#include "starmesh/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "starmesh/checkpoint.hpp"
#include "starmesh/image_io.hpp"
#include "starmesh/losses.hpp"

namespace starmesh {

namespace fs = std::filesystem;

namespace {

Tensor stack_images(const std::vector<Tensor>& images, const std::vector<int64_t>& indices) {
  const int64_t n = static_cast<int64_t>(indices.size());
  const Shape& s = images[0].shape();
  Tensor out(Shape{n, s[0], s[1], s[2]});
  const int64_t per = images[0].size();
  for (int64_t k = 0; k < n; ++k) {
    const Tensor& img = images[static_cast<size_t>(indices[static_cast<size_t>(k)])];
    std::copy(img.data(), img.data() + per, out.data() + k * per);
  }
  return out;
}

Tensor viewpoint_tensor(const Viewpoint& v) {
  Tensor t(Shape{3});
  t[0] = v.pitch;
  t[1] = v.yaw;
  t[2] = v.roll;
  return t;
}

// Renders a generator scene bundle at per-sample viewpoints -> [N,H,W,3].
Var render_scenes(const SceneVars& scenes, const std::vector<Var>& views,
                  TopologyPtr topology, const TrainConfig& config) {
  std::vector<RenderJob> jobs;
  for (size_t k = 0; k < scenes.positions.size(); ++k) {
    jobs.push_back(RenderJob{scenes.positions[k], scenes.colors[k], scenes.background[k],
                             views[k]});
  }
  return render_batch_var(jobs, std::move(topology), config.angular_scale,
                          config.render_settings(), config.threads);
}

void abort_with_checkpoint(const std::string& out_dir, const std::string& why,
                           const CheckpointData& data) {
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_checkpoint((fs::path(out_dir) / "diagnostic.ckpt").string(), data);
  }
  throw std::runtime_error("training aborted: " + why);
}

}  // namespace

Tensor sample_latents(int64_t n, int64_t d, Rng& rng) {
  return rng.normal_tensor(Shape{n, d});
}

void append_csv(const std::string& path, int64_t step, const std::string& name, double value) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (fresh) out << "step,name,value\n";
  out << step << "," << name << "," << value << "\n";
}

std::vector<Tensor> sample_views(const GeneratorBase& generator, const Tensor& z,
                                 const TrainConfig& config, int sweep_count) {
  const SceneRepresentation scene =
      generator.scene_for(z, config.angular_scale, config.camera);
  const RenderSettings settings = config.render_settings();
  std::vector<Tensor> tiles;
  tiles.push_back(rasterize(scene, Viewpoint{}, settings).image);

  SceneRepresentation normals = scene;
  normals.texture = normal_map_colors(scene.surface);
  tiles.push_back(rasterize(normals, Viewpoint{}, settings).image);

  const double range = deg_to_rad(config.viewpoint.yaw_range_deg);
  for (int k = 0; k < sweep_count; ++k) {
    Viewpoint v;
    v.yaw = sweep_count > 1 ? -range + 2.0 * range * k / (sweep_count - 1) : 0.0;
    tiles.push_back(rasterize(scene, v, settings).image);
  }
  return tiles;
}

TrainGanResult train_gan(const Dataset& dataset, const TrainConfig& config,
                         const std::string& resume_checkpoint) {
  if (dataset.images.empty()) throw std::invalid_argument("train_gan: empty dataset");
  if (!config.out_dir.empty()) fs::create_directories(config.out_dir);
  const std::string csv_path =
      config.out_dir.empty() ? "" : (fs::path(config.out_dir) / "losses.csv").string();

  set_matmul_threads(config.threads);
  Rng init_rng(config.seed);
  Generator generator(config.model, config.max_radius, init_rng);
  Critic critic(config.model, init_rng);
  Adam opt_g(config.lr, config.beta1, config.beta2);
  Adam opt_d(config.lr, config.beta1, config.beta2);
  opt_g.register_params(generator.params());
  opt_d.register_params(critic.params());

  Rng loop_rng(config.seed ^ 0x7261696eULL);
  int64_t start_step = 0;
  if (!resume_checkpoint.empty()) {
    CheckpointData data = load_checkpoint(resume_checkpoint);
    restore_params(data, generator.params());
    restore_params(data, critic.params());
    restore_optimizer(data, opt_g, "g");
    restore_optimizer(data, opt_d, "d");
    if (data.has_rng_state) loop_rng.set_state(data.rng_state);
    start_step = data.step;
  }

  auto make_checkpoint = [&](int64_t step) {
    CheckpointData data;
    data.step = step;
    store_params(data, generator.params());
    store_params(data, critic.params());
    store_optimizer(data, opt_g, "g");
    store_optimizer(data, opt_d, "d");
    data.rng_state = loop_rng.state();
    data.has_rng_state = true;
    data.meta["kind"] = "gan";
    return data;
  };

  // Fixed latents for the periodic sample grids.
  Rng grid_rng(config.seed ^ 0x67726964ULL);
  std::vector<Tensor> grid_latents;
  for (int k = 0; k < 8; ++k) grid_latents.push_back(sample_latents(1, config.model.d(), grid_rng));

  const int64_t n_real = static_cast<int64_t>(dataset.images.size());
  TrainGanResult result;

  // Latents are plain inputs; gradients only target the parameter leaves.
  auto render_fakes = [&]() -> std::pair<Var, SceneVars> {
    Tensor z = sample_latents(config.batch, config.model.d(), loop_rng);
    SceneVars scenes = generator.forward(constant(z));
    std::vector<Var> views;
    for (int k = 0; k < config.batch; ++k) {
      views.push_back(constant(viewpoint_tensor(sample_viewpoint(config.viewpoint, loop_rng))));
    }
    Var images = render_scenes(scenes, views, generator.topology(), config);
    return {images, std::move(scenes)};
  };

  for (int64_t step = start_step; step < config.steps; ++step) {
    // Critic phase.
    for (int it = 0; it < config.n_critic; ++it) {
      std::vector<int64_t> idx;
      for (int k = 0; k < config.batch; ++k) idx.push_back(loop_rng.uniform_int(n_real));
      Tensor real = stack_images(dataset.images, idx);

      auto [fake_images, scenes] = render_fakes();
      Tensor fake = fake_images.value();

      Var real_scores = critic.forward(constant(real));
      Var fake_scores = critic.forward(constant(fake));
      auto [critic_loss, gen_loss_unused] = wgan_losses_var(real_scores, fake_scores);
      (void)gen_loss_unused;
      auto critic_fn = [&critic](const Var& x) { return critic.forward(x); };
      Var gp = gradient_penalty(critic_fn, real, fake, config.lambda_gp, loop_rng);
      Var total = add(critic_loss, gp);
      if (!std::isfinite(total.value().item())) {
        abort_with_checkpoint(config.out_dir, "non-finite critic loss", make_checkpoint(step));
      }
      GradientMap grads = backward(total);
      opt_d.step(grads);

      const double w_est = -critic_loss.value().item();
      result.wasserstein.push_back(w_est);
      if (!csv_path.empty()) {
        append_csv(csv_path, step, "critic_loss", critic_loss.value().item());
        append_csv(csv_path, step, "gradient_penalty", gp.value().item());
        append_csv(csv_path, step, "wasserstein", w_est);
      }
    }

    // Generator phase.
    {
      auto [fake_images, scenes] = render_fakes();
      Var fake_scores = critic.forward(fake_images);
      Var gen_loss = neg(mean(fake_scores));
      Var smooth;
      if (config.lambda_smooth != 0.0) {
        for (size_t k = 0; k < scenes.positions.size(); ++k) {
          Var s = smoothing_loss_var(scenes.positions[k], *generator.topology());
          smooth = smooth.defined() ? add(smooth, s) : s;
        }
        smooth = mul_scalar(smooth, 1.0 / static_cast<double>(scenes.positions.size()));
      } else {
        smooth = constant_scalar(0.0);
      }
      Var total = combined_generator_objective(gen_loss, smooth, config.lambda_smooth);
      if (!std::isfinite(total.value().item())) {
        abort_with_checkpoint(config.out_dir, "non-finite generator loss",
                              make_checkpoint(step));
      }
      GradientMap grads = backward(total);
      opt_g.step(grads);
      result.final_smoothing = smooth.value().item();
      if (!csv_path.empty()) {
        append_csv(csv_path, step, "generator_loss", gen_loss.value().item());
        append_csv(csv_path, step, "smoothing", smooth.value().item());
      }
    }

    const int64_t done = step + 1;
    if (!config.out_dir.empty() &&
        (done % config.checkpoint_every == 0 || done == config.steps)) {
      fs::create_directories(fs::path(config.out_dir) / "checkpoints");
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoints/step_%06lld.ckpt",
                    static_cast<long long>(done));
      const std::string path = (fs::path(config.out_dir) / name).string();
      save_checkpoint(path, make_checkpoint(done));
      result.checkpoint_path = path;
    }
    if (!config.out_dir.empty() && (done % config.sample_every == 0 || done == config.steps)) {
      fs::create_directories(fs::path(config.out_dir) / "samples");
      std::vector<Tensor> tiles;
      for (const Tensor& z : grid_latents) {
        for (Tensor& t : sample_views(generator, z, config)) tiles.push_back(std::move(t));
      }
      char name[64];
      std::snprintf(name, sizeof(name), "samples/step_%06lld.png",
                    static_cast<long long>(done));
      png_write((fs::path(config.out_dir) / name).string(), tile_images(tiles, 7));
    }
  }
  result.steps = config.steps;
  return result;
}

TrainEncoderResult train_encoder(const Dataset& dataset, const GeneratorBase& frozen_generator,
                                 Encoder& encoder, const TrainConfig& config) {
  if (dataset.images.empty()) throw std::invalid_argument("train_encoder: empty dataset");
  if (!config.out_dir.empty()) fs::create_directories(config.out_dir);
  const std::string csv_path =
      config.out_dir.empty() ? "" : (fs::path(config.out_dir) / "losses.csv").string();

  set_matmul_threads(config.threads);
  TrainEncoderResult result;
  result.generator_checksum_before = params_checksum(frozen_generator.params());

  Adam opt(config.lr, config.beta1, config.beta2);
  opt.register_params(encoder.params());
  Rng loop_rng(config.seed ^ 0x656e63ULL);
  const int64_t n_real = static_cast<int64_t>(dataset.images.size());

  for (int64_t step = 0; step < config.steps; ++step) {
    std::vector<int64_t> idx;
    for (int k = 0; k < config.batch; ++k) idx.push_back(loop_rng.uniform_int(n_real));
    Tensor batch = stack_images(dataset.images, idx);
    Var input = constant(batch);

    EncoderOutput enc = encoder.forward(input);
    SceneVars scenes = frozen_generator.forward(enc.z);
    std::vector<Var> views;
    for (int k = 0; k < config.batch; ++k) {
      Var pitch = slice(enc.angles[0], 0, k, 1);
      Var yaw = slice(enc.angles[1], 0, k, 1);
      Var roll = slice(enc.angles[2], 0, k, 1);
      views.push_back(concat0({pitch, yaw, roll}));
    }
    Var estimates = render_scenes(scenes, views, frozen_generator.topology(), config);
    Var loss = autoencoder_loss_var(estimates, input);
    if (!std::isfinite(loss.value().item())) {
      CheckpointData data;
      data.step = step;
      store_params(data, encoder.params());
      abort_with_checkpoint(config.out_dir, "non-finite autoencoder loss", data);
    }
    GradientMap grads = backward(loss);
    opt.step(grads);
    result.final_loss = loss.value().item();
    if (!csv_path.empty() && (step % 10 == 0 || step + 1 == config.steps)) {
      append_csv(csv_path, step, "autoencoder_loss", result.final_loss);
    }

    const int64_t done = step + 1;
    if (!config.out_dir.empty() && (done % config.sample_every == 0 || done == config.steps)) {
      // Reconstruction panels: input, estimate, background window, texture
      // atlas, normal map, three novel views.
      fs::create_directories(fs::path(config.out_dir) / "panels");
      std::vector<Tensor> tiles;
      const int show = std::min<int>(4, config.batch);
      const RenderSettings settings = config.render_settings();
      for (int k = 0; k < show; ++k) {
        Tensor input_img(Shape{config.camera.image_size, config.camera.image_size, 3});
        std::copy(batch.data() + k * input_img.size(),
                  batch.data() + (k + 1) * input_img.size(), input_img.data());
        tiles.push_back(input_img);

        Tensor est(Shape{config.camera.image_size, config.camera.image_size, 3});
        std::copy(estimates.value().data() + k * est.size(),
                  estimates.value().data() + (k + 1) * est.size(), est.data());
        tiles.push_back(est);

        SceneRepresentation scene;
        scene.surface.topology = frozen_generator.topology();
        scene.surface.positions = scenes.positions[static_cast<size_t>(k)].value();
        scene.texture = scenes.colors[static_cast<size_t>(k)].value();
        scene.background = make_background(scenes.background[static_cast<size_t>(k)].value(),
                                           config.angular_scale, config.camera);

        // Background window at zero shift.
        Tensor bg_window(Shape{config.camera.image_size, config.camera.image_size, 3});
        for (int i = 0; i < config.camera.image_size; ++i) {
          for (int j = 0; j < config.camera.image_size; ++j) {
            const Vec3 c = sample_background(j, i, Viewpoint{}, scene.background);
            bg_window.at(i, j, 0) = c.x;
            bg_window.at(i, j, 1) = c.y;
            bg_window.at(i, j, 2) = c.z;
          }
        }
        tiles.push_back(bg_window);

        // Texture atlas resized into an image-sized tile (grid order).
        const int side = frozen_generator.config().grid_side();
        Tensor atlas(Shape{config.camera.image_size, config.camera.image_size, 3});
        for (int i = 0; i < config.camera.image_size; ++i) {
          for (int j = 0; j < config.camera.image_size; ++j) {
            const int si = std::min(side - 1, i * side / config.camera.image_size);
            const int sj = std::min(side - 1, j * side / config.camera.image_size);
            for (int c = 0; c < 3; ++c) {
              atlas.at(i, j, c) = scene.texture[3 * (si * side + sj) + c];
            }
          }
        }
        tiles.push_back(atlas);

        SceneRepresentation normal_scene = scene;
        normal_scene.texture = normal_map_colors(scene.surface);
        tiles.push_back(rasterize(normal_scene, Viewpoint{}, settings).image);

        const double range = deg_to_rad(config.viewpoint.yaw_range_deg);
        for (int nv = 0; nv < 3; ++nv) {
          Viewpoint v;
          v.yaw = -range + range * nv;
          tiles.push_back(rasterize(scene, v, settings).image);
        }
      }
      char name[64];
      std::snprintf(name, sizeof(name), "panels/step_%06lld.png",
                    static_cast<long long>(done));
      png_write((fs::path(config.out_dir) / name).string(), tile_images(tiles, 8));
    }
  }

  result.generator_checksum_after = params_checksum(frozen_generator.params());
  if (!config.out_dir.empty()) {
    CheckpointData data;
    data.step = config.steps;
    store_params(data, encoder.params());
    store_optimizer(data, opt, "e");
    data.rng_state = loop_rng.state();
    data.has_rng_state = true;
    data.meta["kind"] = "encoder";
    const std::string path = (fs::path(config.out_dir) / "encoder.ckpt").string();
    save_checkpoint(path, data);
    result.checkpoint_path = path;
  }
  result.steps = config.steps;
  return result;
}

}  // namespace starmesh
