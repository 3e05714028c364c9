// Copyright 2026 The shadowfit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

#include "shadowfit/depth_field.hpp"
#include "shadowfit/scene.hpp"
#include "shadowfit/shadow_renderer.hpp"

namespace shadowfit {

struct LossTerms {
  std::vector<double> rec_per_light;
  double depth_reg = 0.0;
  double lambda = 0.0;
  double total = 0.0;

  double rec_mean() const {
    double s = 0.0;
    for (double r : rec_per_light) s += r;
    return rec_per_light.empty() ? 0.0 : s / double(rec_per_light.size());
  }
};

/// Mean absolute shadow difference over the predicted map's covered pixels.
inline double reconstruction_loss(const ShadowMap& pred, const ShadowMap& truth) {
  if (!pred.values.same_size(truth.values))
    throw DimensionMismatch("reconstruction_loss: shadow maps differ in size");
  double sum = 0.0;
  long covered = 0;
  for (size_t i = 0; i < pred.values.size(); ++i) {
    if (pred.coverage[i] <= 0) continue;
    sum += std::abs(pred.values[i] - truth.values[i]);
    ++covered;
  }
  return covered > 0 ? sum / double(covered) : 0.0;
}

/// Edge-aware smoothness: sum over pixels of |forward depth difference|
/// weighted by exp(-|forward difference of the mean image|), both axes. The
/// last column/row is replication-padded, so it contributes nothing.
inline double depth_regularization(const Image<double>& depth, const Image<double>& mean_image) {
  require_same_size(depth, mean_image, "depth_regularization");
  const int W = depth.width(), H = depth.height();
  double total = 0.0;
  for (int v = 0; v < H; ++v)
    for (int u = 0; u + 1 < W; ++u)
      total += std::abs(depth(u + 1, v) - depth(u, v)) *
               std::exp(-std::abs(mean_image(u + 1, v) - mean_image(u, v)));
  for (int v = 0; v + 1 < H; ++v)
    for (int u = 0; u < W; ++u)
      total += std::abs(depth(u, v + 1) - depth(u, v)) *
               std::exp(-std::abs(mean_image(u, v + 1) - mean_image(u, v)));
  return total;
}

/// Accumulates weight * d(depth_regularization)/d(depth) into d_depth.
inline void depth_regularization_backward(const Image<double>& depth,
                                          const Image<double>& mean_image, double weight,
                                          Image<double>& d_depth) {
  require_same_size(depth, mean_image, "depth_regularization");
  const int W = depth.width(), H = depth.height();
  auto signum = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
  for (int v = 0; v < H; ++v)
    for (int u = 0; u + 1 < W; ++u) {
      const double g = weight * signum(depth(u + 1, v) - depth(u, v)) *
                       std::exp(-std::abs(mean_image(u + 1, v) - mean_image(u, v)));
      d_depth(u + 1, v) += g;
      d_depth(u, v) -= g;
    }
  for (int v = 0; v + 1 < H; ++v)
    for (int u = 0; u < W; ++u) {
      const double g = weight * signum(depth(u, v + 1) - depth(u, v)) *
                       std::exp(-std::abs(mean_image(u, v + 1) - mean_image(u, v)));
      d_depth(u, v + 1) += g;
      d_depth(u, v) -= g;
    }
}

/// Piecewise-constant schedule keyed by epoch fraction in [0, 1).
template <class T>
struct Schedule {
  struct Entry {
    double fraction;
    T value;
  };
  std::vector<Entry> entries;

  T at(int epoch, int max_epochs) const {
    if (entries.empty()) throw InvalidParams("schedule: needs at least one entry");
    T value = entries.front().value;
    for (const Entry& e : entries)
      if (double(epoch) >= e.fraction * double(max_epochs)) value = e.value;
    return value;
  }
};

inline Schedule<double> default_tau_schedule() {
  return Schedule<double>{{{0.0, 0.3}, {0.25, 0.1}, {0.5, 0.03}, {0.75, 0.01}}};
}

inline Schedule<int> default_stride_schedule() {
  return Schedule<int>{{{0.0, 4}, {0.3, 2}, {0.6, 1}}};
}

/// Adam moments plus the step-decayed learning-rate policy:
/// lr(epoch) = lr0 * decay^floor(epoch / decay_every).
struct OptimizerState {
  Eigen::VectorXd m, v;
  long step_count = 0;
  double lr0 = 5e-5;
  int lr_decay_every = 15;
  double lr_decay = 0.9;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  double lr_at(int epoch) const {
    return lr0 * std::pow(lr_decay, double(epoch / lr_decay_every));
  }

  void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
    if (m.size() != params.size()) {
      m = Eigen::VectorXd::Zero(params.size());
      v = Eigen::VectorXd::Zero(params.size());
    }
    ++step_count;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, double(step_count));
    const double bc2 = 1.0 - std::pow(beta2, double(step_count));
    params.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
};

struct StepSettings {
  double tau = 0.1;
  int stride = 1;
  int supersample = 1;
  double lambda = 0.0;
  int workers = 1;
};

namespace detail {

/// Forward (and optionally backward) of the full per-step loss. The field is
/// evaluated once on the pixel lattice; every light renders from that grid.
/// Per-light depth gradients go to per-light buffers merged in light order, so
/// the result does not depend on the worker count.
inline LossTerms scene_loss(const DepthField& field, const Scene& scene, const StepSettings& s,
                            Eigen::VectorXd* d_params,
                            DepthField::EvalTape* shared_tape = nullptr) {
  const CameraModel& cam = scene.camera();
  const int W = cam.width(), H = cam.height();
  const int N = scene.n_lights();

  DepthField::EvalTape local_tape;
  DepthField::EvalTape& tape = shared_tape ? *shared_tape : local_tape;
  if (tape.x0.cols() != long(W) * H || tape.x0.rows() != field.config().encoded_dim())
    field.encode_grid(tape);
  const Eigen::VectorXd depths = field.forward_encoded(tape);
  Image<double> grid(W, H);
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = depths[long(i)];

  LossTerms terms;
  terms.rec_per_light.assign(size_t(N), 0.0);
  terms.lambda = s.lambda;

  std::vector<Image<double>> d_grid_by_light;
  if (d_params) d_grid_by_light.assign(size_t(N), Image<double>(W, H, 0.0));

  auto process_light = [&](int j) {
    RenderTape rtape;
    const ShadowMap pred =
        render_shadow_map_r2(grid, cam, scene.lights()[size_t(j)], s.tau, s.stride, s.supersample,
                             d_params ? &rtape : nullptr, nullptr, j);
    const ShadowMap& truth = scene.truth()[size_t(j)];
    terms.rec_per_light[size_t(j)] = reconstruction_loss(pred, truth);
    if (!d_params) return;

    long covered = 0;
    for (size_t i = 0; i < pred.values.size(); ++i)
      if (pred.coverage[i] > 0) ++covered;
    if (covered == 0) return;
    Image<double> d_values(W, H, 0.0);
    const double w = 1.0 / (double(N) * double(covered));
    for (size_t i = 0; i < pred.values.size(); ++i) {
      if (pred.coverage[i] <= 0) continue;
      const double diff = pred.values[i] - truth.values[i];
      d_values[i] = w * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
    }
    render_shadow_map_r2_backward(rtape, cam, scene.lights()[size_t(j)], pred, d_values,
                                  d_grid_by_light[size_t(j)]);
  };

  if (s.workers <= 1 || N == 1) {
    for (int j = 0; j < N; ++j) process_light(j);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int n_workers = std::min(s.workers, N);
    for (int w = 0; w < n_workers; ++w)
      pool.emplace_back([&] {
        for (int j = next.fetch_add(1); j < N; j = next.fetch_add(1)) process_light(j);
      });
    for (auto& t : pool) t.join();
  }

  Image<double> d_grid(W, H, 0.0);
  if (d_params)
    for (int j = 0; j < N; ++j)
      for (size_t i = 0; i < d_grid.size(); ++i) d_grid[i] += d_grid_by_light[size_t(j)][i];

  if (s.lambda != 0.0) {
    terms.depth_reg = depth_regularization(grid, scene.mean_image());
    if (d_params) depth_regularization_backward(grid, scene.mean_image(), s.lambda, d_grid);
  }

  terms.total = terms.rec_mean() + s.lambda * terms.depth_reg;

  if (d_params) {
    const Eigen::Map<const Eigen::VectorXd> dd(d_grid.data().data(), long(d_grid.size()));
    if (d_params->size() != field.param_count())
      *d_params = Eigen::VectorXd::Zero(field.param_count());
    field.backward_into(tape, dd, *d_params);
  }
  return terms;
}

}  // namespace detail

/// Loss of the current field without updating it.
inline LossTerms evaluate_loss(const DepthField& field, const Scene& scene,
                               const StepSettings& settings) {
  return detail::scene_loss(field, scene, settings, nullptr);
}

/// Loss plus its analytic parameter gradient.
inline LossTerms loss_with_grads(const DepthField& field, const Scene& scene,
                                 const StepSettings& settings, Eigen::VectorXd& d_params) {
  d_params = Eigen::VectorXd::Zero(field.param_count());
  return detail::scene_loss(field, scene, settings, &d_params);
}

/// Renders every light, assembles the loss, backpropagates, and applies one
/// Adam update at the given learning rate. The optional tape carries the
/// encoded pixel grid across steps (the encoding never changes).
inline LossTerms step(DepthField& field, const Scene& scene, OptimizerState& state,
                      const StepSettings& settings, double lr,
                      DepthField::EvalTape* shared_tape = nullptr) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(field.param_count());
  const LossTerms terms = detail::scene_loss(field, scene, settings, &grad, shared_tape);
  state.adam_update(field.params(), grad, lr);
  return terms;
}

struct TraceRow {
  int epoch = 0;
  double total = 0.0;
  double rec = 0.0;
  double depth_reg = 0.0;
  double lr = 0.0;
  double tau = 0.0;
  int stride = 1;
};

struct FitConfig {
  int max_epochs = 500;
  uint64_t seed = 0;
  double lambda = 5e-4;
  Schedule<double> tau_schedule = default_tau_schedule();
  Schedule<int> stride_schedule = default_stride_schedule();
  int supersample = 1;
  int workers = 1;
  double lr0 = 5e-5;
  int lr_decay_every = 15;
  double lr_decay = 0.9;
  double plateau_rel_tol = 1e-4;
  int plateau_patience = 20;
  int plateau_window = 10;
  EncodingSpec encoding;
  int hidden_width = 128;
  int affine_layers = 6;
  double omega0 = 30.0;
  std::function<void(const TraceRow&)> on_epoch;
};

/// One-shot optimization: sine-MLP init from the seed, epochs over all lights
/// with the learning-rate, temperature and stride schedules, stopping at
/// max_epochs or when the moving-average loss plateaus. Deterministic per
/// seed and config.
inline DepthField fit(const Scene& scene, const FitConfig& cfg) {
  DepthFieldConfig field_cfg;
  field_cfg.image_width = scene.camera().width();
  field_cfg.image_height = scene.camera().height();
  field_cfg.encoding = cfg.encoding;
  field_cfg.hidden_width = cfg.hidden_width;
  field_cfg.affine_layers = cfg.affine_layers;
  field_cfg.omega0 = cfg.omega0;
  field_cfg.depth_offset = scene.depth_offset();
  field_cfg.depth_scale = scene.depth_scale();
  DepthField field = DepthField::init(field_cfg, cfg.seed);

  OptimizerState state;
  state.lr0 = cfg.lr0;
  state.lr_decay_every = cfg.lr_decay_every;
  state.lr_decay = cfg.lr_decay;

  std::deque<double> window;
  double best_ma = std::numeric_limits<double>::infinity();
  int last_improve = 0;
  double prev_tau = -1.0;
  int prev_stride = -1;
  DepthField::EvalTape tape;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    StepSettings s;
    s.tau = cfg.tau_schedule.at(epoch, cfg.max_epochs);
    s.stride = cfg.stride_schedule.at(epoch, cfg.max_epochs);
    s.supersample = cfg.supersample;
    s.lambda = cfg.lambda;
    s.workers = cfg.workers;
    const double lr = state.lr_at(epoch);

    // Schedule switches change the loss landscape; restart plateau tracking.
    if (s.tau != prev_tau || s.stride != prev_stride) {
      window.clear();
      best_ma = std::numeric_limits<double>::infinity();
      last_improve = epoch;
      prev_tau = s.tau;
      prev_stride = s.stride;
    }

    const LossTerms terms = step(field, scene, state, s, lr, &tape);

    if (cfg.on_epoch)
      cfg.on_epoch(TraceRow{epoch, terms.total, terms.rec_mean(), terms.depth_reg, lr, s.tau,
                            s.stride});

    window.push_back(terms.total);
    if (int(window.size()) > cfg.plateau_window) window.pop_front();
    if (int(window.size()) == cfg.plateau_window) {
      double ma = 0.0;
      for (double x : window) ma += x;
      ma /= double(window.size());
      if (ma < best_ma * (1.0 - cfg.plateau_rel_tol)) {
        best_ma = ma;
        last_improve = epoch;
      } else if (epoch - last_improve >= cfg.plateau_patience) {
        break;
      }
    }
  }
  return field;
}

}  // namespace shadowfit
