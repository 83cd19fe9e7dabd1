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

#include "starmesh/harness.hpp"
#include "starmesh/networks.hpp"

namespace starmesh {

struct TrainConfig {
  ModelConfig model;
  CameraIntrinsics camera;
  ViewpointDistribution viewpoint;
  double blur = 1.0;
  double angular_scale = 0.2;
  double max_radius = 1.0;
  int batch = 16;
  double lr = 1e-4;
  double beta1 = 0.5, beta2 = 0.9;
  int n_critic = 5;
  double lambda_gp = 10.0;
  double lambda_smooth = 0.0;
  int64_t steps = 5000;
  uint64_t seed = 1;
  int64_t checkpoint_every = 1000;
  int64_t sample_every = 1000;
  int threads = 4;
  std::string out_dir;

  RenderSettings render_settings() const {
    return RenderSettings{camera, viewpoint.order, blur};
  }
};

// z ~ N(0, I) batches, deterministic under the stream.
Tensor sample_latents(int64_t n, int64_t d, Rng& rng);

struct TrainGanResult {
  std::string checkpoint_path;
  std::vector<double> wasserstein;  // one estimate per critic step
  double final_smoothing = 0;
  int64_t steps = 0;
};

// Alternating WGAN-GP loop: n_critic critic updates per generator update;
// every generated scene passes the scale constraint before rendering and
// every fake image gets an independently sampled viewpoint. Emits loss CSV,
// checkpoints and sample grids under config.out_dir.
TrainGanResult train_gan(const Dataset& dataset, const TrainConfig& config,
                         const std::string& resume_checkpoint = "");

struct TrainEncoderResult {
  std::string checkpoint_path;
  double final_loss = 0;
  std::string generator_checksum_before;
  std::string generator_checksum_after;
  int64_t steps = 0;
};

// Autoencoder phase: minimizes the reconstruction loss over encoder
// parameters only, with the generator frozen.
TrainEncoderResult train_encoder(const Dataset& dataset, const GeneratorBase& frozen_generator,
                                 Encoder& encoder, const TrainConfig& config);

// Renders the generator's scene bundle for sample grids: frontal view,
// normal map, and a yaw sweep.
std::vector<Tensor> sample_views(const GeneratorBase& generator, const Tensor& z,
                                 const TrainConfig& config, int sweep_count = 5);

void append_csv(const std::string& path, int64_t step, const std::string& name, double value);

}  // namespace starmesh
