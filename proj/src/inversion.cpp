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

#include "starmesh/inversion.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "starmesh/losses.hpp"

namespace starmesh {

namespace {

Tensor viewpoint_tensor(const Viewpoint& v) {
  Tensor t(Shape{3});
  t[0] = v.pitch;
  t[1] = v.yaw;
  t[2] = v.roll;
  return t;
}

// One forward render of G at (z, v), returning the [H,W,3] image Var.
Var render_candidate(const GeneratorBase& generator, const Var& z_row, const Var& view,
                     const InversionOptions& opts) {
  SceneVars scene = generator.forward(z_row);
  return render_scene_var(scene.positions[0], scene.colors[0], scene.background[0], view,
                          generator.topology(), opts.angular_scale, opts.render);
}

}  // namespace

double image_rms(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image_rms: shape mismatch");
  double s = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

std::vector<InversionCandidate> invert_grid_init(const Tensor& target,
                                                 const GeneratorBase& generator,
                                                 const ViewpointDistribution& dist, int n_starts,
                                                 const InversionOptions& opts) {
  if (n_starts < 1) throw std::invalid_argument("invert_grid_init: n_starts must be >= 1");
  Rng rng(opts.seed ^ 0x1274abcdULL);
  const double ranges[3] = {deg_to_rad(dist.pitch_range_deg), deg_to_rad(dist.yaw_range_deg),
                            deg_to_rad(dist.roll_range_deg)};
  int active = 0;
  for (double r : ranges) active += r > 0 ? 1 : 0;

  std::vector<Viewpoint> grid;
  if (n_starts == 1 || active == 0) {
    grid.push_back(dist.center());
  } else {
    const int per_axis = std::max(
        2, static_cast<int>(std::ceil(std::pow(double(n_starts), 1.0 / active))));
    auto axis_values = [&](double range) {
      std::vector<double> vals;
      if (range <= 0) {
        vals.push_back(0.0);
      } else {
        for (int k = 0; k < per_axis; ++k) {
          vals.push_back(-range + 2.0 * range * k / (per_axis - 1));
        }
      }
      return vals;
    };
    for (double p : axis_values(ranges[0])) {
      for (double y : axis_values(ranges[1])) {
        for (double r : axis_values(ranges[2])) {
          grid.push_back(Viewpoint{p, y, r});
        }
      }
    }
  }

  std::vector<InversionCandidate> candidates;
  const int64_t d = generator.config().d();
  for (size_t k = 0; k < grid.size(); ++k) {
    InversionCandidate c;
    c.z = rng.normal_tensor(Shape{1, d});
    c.view = grid[k];
    Var img = render_candidate(generator, constant(c.z), constant(viewpoint_tensor(c.view)),
                               opts);
    c.residual = image_rms(img.value(), target);
    candidates.push_back(std::move(c));
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const InversionCandidate& a, const InversionCandidate& b) {
                     return a.residual < b.residual;
                   });
  if (static_cast<int>(candidates.size()) > n_starts) candidates.resize(static_cast<size_t>(n_starts));
  return candidates;
}

InversionResult invert(const Tensor& target, const GeneratorBase& generator,
                       const ViewpointDistribution& dist, const InversionOptions& opts) {
  const Shape expect{opts.render.camera.image_size, opts.render.camera.image_size, 3};
  if (target.shape() != expect) {
    throw std::invalid_argument("invert: target must match the render resolution " +
                                shape_to_string(expect));
  }
  std::vector<InversionCandidate> starts =
      invert_grid_init(target, generator, dist, opts.multi_starts, opts);

  struct StartOutcome {
    bool diverged = false;
    double residual = 0;
    Tensor z;
    Viewpoint view;
    std::vector<double> history;
  };
  std::vector<StartOutcome> outcomes(starts.size());

  auto run_start = [&](size_t s) {
    const InversionCandidate& start = starts[s];
    StartOutcome& out = outcomes[s];
    Var z = parameter(start.z);
    Var view = parameter(viewpoint_tensor(start.view));
    Adam opt(opts.lr, 0.9, 0.999);
    opt.register_params({{"z", z}, {"v", view}});

    out.residual = start.residual;
    out.z = start.z;
    out.view = start.view;
    out.history.push_back(out.residual);

    for (int it = 0; it < opts.iterations; ++it) {
      Var img = render_candidate(generator, z, view, opts);
      // The image term is the squared L2 norm (a pixel sum); the weak
      // Gaussian-support pull stays small against it.
      Var objective = add(sum(square(sub(img, constant(target)))),
                          mul_scalar(sum(square(z)), opts.z_penalty));
      if (!std::isfinite(objective.value().item())) {
        out.diverged = true;
        return;
      }
      const double rms = image_rms(img.value(), target);
      if (rms < out.residual) {
        out.residual = rms;
        out.z = z.value();
        out.view = Viewpoint{view.value()[0], view.value()[1], view.value()[2]};
      }
      out.history.push_back(out.residual);
      GradientMap grads = backward(objective);
      opt.step(grads);
      // Projected step: keep the viewpoint inside the support box.
      Viewpoint clamped = dist.clamp(
          Viewpoint{view.value()[0], view.value()[1], view.value()[2]});
      view.node()->mutable_value() = viewpoint_tensor(clamped);
    }
  };

  // Starts are independent; run them concurrently and reduce in index order
  // so the result does not depend on scheduling.
  if (opts.threads <= 1 || starts.size() <= 1) {
    for (size_t s = 0; s < starts.size(); ++s) run_start(s);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    const size_t workers = std::min<size_t>(static_cast<size_t>(opts.threads), starts.size());
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (size_t s = next.fetch_add(1); s < starts.size(); s = next.fetch_add(1)) {
          run_start(s);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  InversionResult best;
  best.residual = std::numeric_limits<double>::infinity();
  int divergent = 0;
  bool any_finished = false;
  for (const StartOutcome& out : outcomes) {
    if (out.diverged) {
      ++divergent;
      continue;
    }
    any_finished = true;
    if (out.residual < best.residual) {
      best.residual = out.residual;
      best.z = out.z;
      best.view = out.view;
      best.iterations = opts.iterations;
      best.residual_history = out.history;
    }
  }
  if (!any_finished) {
    throw std::runtime_error("invert: every start diverged");
  }
  best.divergent_starts = divergent;
  best.scene = generator.scene_for(best.z, opts.angular_scale, opts.render.camera);
  return best;
}

}  // namespace starmesh
