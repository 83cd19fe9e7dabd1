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

#include <functional>
#include <utility>

#include "starmesh/autodiff.hpp"
#include "starmesh/geometry.hpp"
#include "starmesh/rng.hpp"

namespace starmesh {

// Wasserstein losses. The critic maximizes mean(real) - mean(fake), so
// critic_loss is the negation; the generator minimizes -mean(fake).
struct WganLosses {
  double critic_loss = 0;
  double generator_loss = 0;
};
WganLosses wgan_losses(const Tensor& critic_real, const Tensor& critic_fake);
std::pair<Var, Var> wgan_losses_var(const Var& real_scores, const Var& fake_scores);

// lambda * E[(||grad_xhat critic(xhat)|| - 1)^2] with xhat uniform on
// segments between matching real/fake samples. The returned Var is
// twice-differentiable down to the critic parameters.
Var gradient_penalty(const std::function<Var(const Var&)>& critic, const Tensor& real,
                     const Tensor& fake, double lambda, Rng& rng);
// Deterministic variant taking the per-sample mixing weights directly.
Var gradient_penalty_with_eps(const std::function<Var(const Var&)>& critic, const Tensor& real,
                              const Tensor& fake, double lambda, const Tensor& eps);

// sum over edge-adjacent triangle pairs of (1 - n_i . n_j); degenerate
// triangles are excluded from the sums.
double smoothing_loss(const SurfaceMesh& mesh);
Var smoothing_loss_var(const Var& positions, const TessellationTopology& topo,
                       double area_eps = 1e-12);

// Mean squared error over pixels and channels.
double autoencoder_loss(const Tensor& a, const Tensor& b);
Var autoencoder_loss_var(const Var& a, const Var& b);

Var combined_generator_objective(const Var& generator_loss, const Var& smoothing,
                                 double lambda_smooth);

}  // namespace starmesh
