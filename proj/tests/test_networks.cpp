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

#include "starmesh/checkpoint.hpp"
#include "starmesh/networks.hpp"

using namespace starmesh;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.gen_channels = 4;
  cfg.image_size = 16;
  cfg.bg_texture_side = 32;
  return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("generator forward is deterministic and respects the latent split") {
  ModelConfig cfg = tiny_model();
  Rng rng(3);
  Generator gen(cfg, 1.0, rng);
  Rng zrng(5);
  Tensor z = zrng.normal_tensor({1, cfg.d()});

  SceneVars a = gen.forward(constant(z));
  SceneVars b = gen.forward(constant(z));
  CHECK(max_abs_diff(a.positions[0].value(), b.positions[0].value()) == 0.0);
  CHECK(max_abs_diff(a.background[0].value(), b.background[0].value()) == 0.0);

  // Perturbing the background part leaves the object bit-identical.
  Tensor z2 = z;
  for (int64_t i = cfg.d_object; i < cfg.d(); ++i) z2[i] += 0.37;
  SceneVars c = gen.forward(constant(z2));
  CHECK(max_abs_diff(a.positions[0].value(), c.positions[0].value()) == 0.0);
  CHECK(max_abs_diff(a.colors[0].value(), c.colors[0].value()) == 0.0);
  CHECK(max_abs_diff(a.background[0].value(), c.background[0].value()) > 1e-6);
}

TEST_CASE("generator output ranges: texture in [0,1], radii positive and bounded") {
  ModelConfig cfg = tiny_model();
  Rng rng(7);
  Generator gen(cfg, 1.0, rng);
  Rng zrng(11);
  SceneVars s = gen.forward(constant(zrng.normal_tensor({2, cfg.d()})));
  for (int k = 0; k < 2; ++k) {
    CHECK(s.colors[static_cast<size_t>(k)].value().min() >= 0.0);
    CHECK(s.colors[static_cast<size_t>(k)].value().max() <= 1.0);
    CHECK(s.background[static_cast<size_t>(k)].value().min() >= 0.0);
    CHECK(s.background[static_cast<size_t>(k)].value().max() <= 1.0);
    CHECK(s.rho[static_cast<size_t>(k)].value().min() > 0.0);
    CHECK(s.rho[static_cast<size_t>(k)].value().max() <= 1.0 + 1e-12);
  }
}

TEST_CASE("alpha head jacobian w.r.t. the object latent matches finite differences") {
  ModelConfig cfg = tiny_model();
  Rng rng(13);
  Generator gen(cfg, 1.0, rng);
  Rng zrng(17);
  Tensor z0 = zrng.normal_tensor({1, cfg.d_object});
  Tensor w = zrng.normal_tensor({32});
  auto probe = [&](const Tensor& z) {
    Var alphas = gen.alpha_head(constant(z));
    return sum(mul(reshape(alphas, Shape{32}), constant(w))).value().item();
  };
  Var z = parameter(z0);
  Var alphas = gen.alpha_head(z);
  Tensor analytic =
      backward(sum(mul(reshape(alphas, Shape{32}), constant(w)))).at(z).value();
  Tensor fd = finite_difference(probe, z0, 1e-6);
  CHECK(max_abs_diff(analytic, fd) < 1e-7);
}

TEST_CASE("critic: zeroed parameters give zero scores, gradients match FD") {
  ModelConfig cfg = tiny_model();
  Rng rng(19);
  Critic critic(cfg, rng);
  Rng xrng(23);
  Tensor x = xrng.uniform_tensor({2, cfg.image_size, cfg.image_size, 3}, 0, 1);

  for (const auto& p : critic.params()) {
    for (int64_t i = 0; i < p.var.size(); ++i) p.var.node()->mutable_value()[i] = 0.0;
  }
  Tensor scores = critic.forward(constant(x)).value();
  CHECK(scores[0] == 0.0);
  CHECK(scores[1] == 0.0);

  // Re-randomize and check input gradients against finite differences.
  Rng rng2(29);
  Critic critic2(cfg, rng2);
  Var input = parameter(x);
  Var out = sum(critic2.forward(input));
  Tensor analytic = backward(out).at(input).value();
  // Probe a handful of entries (full FD over the image is wasteful).
  Rng pick(31);
  for (int k = 0; k < 12; ++k) {
    const int64_t i = pick.uniform_int(x.size());
    const double h = 1e-6;
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = sum(critic2.forward(constant(xp))).value().item();
    const double fm = sum(critic2.forward(constant(xm))).value().item();
    const double fd = (fp - fm) / (2 * h);
    CHECK(analytic[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("critic responds to pixel permutations") {
  ModelConfig cfg = tiny_model();
  Rng rng(37);
  Critic critic(cfg, rng);
  Rng xrng(41);
  Tensor x = xrng.uniform_tensor({1, cfg.image_size, cfg.image_size, 3}, 0, 1);
  Tensor shuffled = x;
  // Swap two pixel blocks.
  for (int c = 0; c < 3; ++c) {
    std::swap(shuffled[(3 * cfg.image_size + 3) * 3 + c],
              shuffled[(12 * cfg.image_size + 13) * 3 + c]);
  }
  const double a = critic.forward(constant(x)).value().item();
  const double b = critic.forward(constant(shuffled)).value().item();
  CHECK(a != b);
}

TEST_CASE("encoder: symmetric logits give the midpoint viewpoint") {
  ModelConfig cfg = tiny_model();
  ViewpointDistribution dist;
  Rng rng(43);
  Encoder enc(cfg, dist, rng);
  // Zero all parameters: logits become uniform, expectation = range midpoint.
  for (const auto& p : enc.params()) {
    for (int64_t i = 0; i < p.var.size(); ++i) p.var.node()->mutable_value()[i] = 0.0;
  }
  Rng xrng(47);
  Tensor x = xrng.uniform_tensor({2, cfg.image_size, cfg.image_size, 3}, 0, 1);
  EncoderOutput out = enc.forward(constant(x));
  CHECK(out.angles[0].value()[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.angles[1].value()[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("encoder expectation approaches the bin center for a dominant logit") {
  const Tensor centers = Encoder::bin_centers(deg_to_rad(65.0), 21);
  // Build softmax expectation by hand with one huge logit.
  double denom = 0, num = 0;
  for (int b = 0; b < 21; ++b) {
    const double logit = b == 5 ? 50.0 : 0.0;
    const double e = std::exp(logit - 50.0);
    denom += e;
    num += e * centers[b];
  }
  CHECK(num / denom == doctest::Approx(centers[5]).epsilon(1e-6));
}

TEST_CASE("encoder viewpoint estimates always stay inside the support box") {
  ModelConfig cfg = tiny_model();
  ViewpointDistribution dist;
  dist.roll_range_deg = 15.0;
  Rng rng(53);
  Encoder enc(cfg, dist, rng);
  Rng xrng(59);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = xrng.uniform_tensor({3, cfg.image_size, cfg.image_size, 3}, 0, 1);
    EncoderOutput out = enc.forward(constant(x));
    for (int64_t k = 0; k < 3; ++k) {
      Viewpoint v{out.angles[0].value()[k], out.angles[1].value()[k],
                  out.angles[2].value()[k]};
      CHECK(dist.contains(v));
    }
  }
}

TEST_CASE("encoder expectation equals the naive probability-weighted sum") {
  ModelConfig cfg = tiny_model();
  ViewpointDistribution dist;
  Rng rng(61);
  Encoder enc(cfg, dist, rng);
  Rng xrng(67);
  Tensor x = xrng.uniform_tensor({1, cfg.image_size, cfg.image_size, 3}, 0, 1);
  EncoderOutput out = enc.forward(constant(x));
  const Tensor logits = out.logits[1].value();
  const Tensor centers = Encoder::bin_centers(deg_to_rad(dist.yaw_range_deg), cfg.angle_bins);
  double m = logits[0];
  for (int64_t b = 1; b < cfg.angle_bins; ++b) m = std::max(m, logits[b]);
  double denom = 0, num = 0;
  for (int64_t b = 0; b < cfg.angle_bins; ++b) {
    const double e = std::exp(logits[b] - m);
    denom += e;
    num += e * centers[b];
  }
  CHECK(out.angles[1].value()[0] == doctest::Approx(num / denom).epsilon(1e-12));
}

TEST_CASE("encoder parameter gradients through the angle head match FD") {
  ModelConfig cfg = tiny_model();
  ViewpointDistribution dist;
  Rng rng(71);
  Encoder enc(cfg, dist, rng);
  Rng xrng(73);
  Tensor x = xrng.uniform_tensor({1, cfg.image_size, cfg.image_size, 3}, 0, 1);
  auto loss_for = [&]() {
    EncoderOutput out = enc.forward(constant(x));
    return add(sum(square(out.angles[1])), sum(square(out.z)));
  };
  GradientMap grads = backward(loss_for());
  int checked = 0;
  for (const auto& p : enc.params()) {
    if (p.var.size() > 64) continue;  // biases and small heads only
    Tensor fd = finite_difference(
        [&](const Tensor& t) {
          const Tensor saved = p.var.node()->value();
          p.var.node()->mutable_value() = t;
          const double v = loss_for().value().item();
          p.var.node()->mutable_value() = saved;
          return v;
        },
        p.var.value(), 1e-6);
    INFO(p.name);
    CHECK(max_abs_diff(grads.tensor_at(p.var), fd) < 1e-5);
    ++checked;
  }
  CHECK(checked >= 4);
}

TEST_CASE("generator parameters round-trip through a checkpoint") {
  ModelConfig cfg = tiny_model();
  Rng rng(79);
  Generator gen(cfg, 1.0, rng);
  CheckpointData data;
  store_params(data, gen.params());

  Rng rng2(83);
  Generator other(cfg, 1.0, rng2);
  restore_params(data, other.params());
  CHECK(params_checksum(gen.params()) == params_checksum(other.params()));
}
