#include <catch2/catch.hpp>
#include <cmath>
#include <vector>

#include "shadowfit/optimizer.hpp"
#include "shadowfit/random.hpp"
#include "shadowfit/synthetic.hpp"

using namespace shadowfit;

namespace {

Scene bump_scene(int size, int n_lights, uint64_t seed, double elev_deg = 40.0) {
  const CameraModel cam = make_scene_camera(size, size, 2.0, 3.0);
  Image<double> grid = make_terrain(TerrainKind::gaussian_bumps,
                                    TerrainParams{size, size, 3.0, 0.4, 2, 0.16, -1, 0.2}, seed);
  auto lights = make_ring_rig_at_elevation(cam, n_lights, 2.3, elev_deg, {0, 0, 3.0});
  return to_scene(bake_scene(std::move(grid), cam, std::move(lights), seed));
}

ShadowMap full_map(int size, double value) {
  ShadowMap m(size, size);
  m.values.fill(value);
  m.coverage.fill(1);
  return m;
}

}  // namespace

TEST_CASE("reconstruction loss is a covered-pixel mean", "[optimizer]") {
  SECTION("identical maps give zero") {
    const ShadowMap a = full_map(8, 1.0);
    REQUIRE(reconstruction_loss(a, a) == 0.0);
  }
  SECTION("opposite maps give one") {
    REQUIRE(reconstruction_loss(full_map(8, 1.0), full_map(8, 0.0)) == 1.0);
  }
  SECTION("a quarter of flipped pixels gives 0.25") {
    ShadowMap truth = full_map(8, 0.0);
    Rng rng(3);
    std::vector<size_t> idx(64);
    for (size_t i = 0; i < 64; ++i) idx[i] = i;
    for (size_t i = 63; i > 0; --i) std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
    for (size_t i = 0; i < 64; ++i) truth.values[idx[i]] = (i % 2) ? 1.0 : 0.0;
    ShadowMap pred = truth;
    for (size_t i = 0; i < 16; ++i) pred.values[idx[i]] = 1.0 - pred.values[idx[i]];
    REQUIRE(reconstruction_loss(pred, truth) == Approx(0.25));
  }
  SECTION("uncovered pixels do not contribute") {
    ShadowMap pred = full_map(4, 1.0);
    ShadowMap truth = full_map(4, 1.0);
    truth.values(0, 0) = 0.0;  // would add 1/16
    pred.coverage(0, 0) = 0;
    REQUIRE(reconstruction_loss(pred, truth) == 0.0);
  }
  SECTION("size mismatch is rejected") {
    REQUIRE_THROWS_AS(reconstruction_loss(full_map(4, 1.0), full_map(5, 1.0)),
                      DimensionMismatch);
  }
}

TEST_CASE("depth regularization sums edge-weighted gradients", "[optimizer]") {
  const int W = 7, H = 5;
  SECTION("constant depth gives zero") {
    Image<double> depth(W, H, 2.5);
    Image<double> mean(W, H, 0.3);
    REQUIRE(depth_regularization(depth, mean) == 0.0);
  }
  SECTION("unit ramp against a flat mean image") {
    Image<double> depth(W, H);
    for (int v = 0; v < H; ++v)
      for (int u = 0; u < W; ++u) depth(u, v) = double(u) + double(v);
    Image<double> mean(W, H, 0.5);
    REQUIRE(depth_regularization(depth, mean) == Approx(double(H * (W - 1) + W * (H - 1))));
  }
  SECTION("an image edge suppresses the aligned depth edge") {
    Image<double> depth(W, H, 1.0);
    for (int v = 0; v < H; ++v)
      for (int u = 3; u < W; ++u) depth(u, v) = 2.0;
    Image<double> flat(W, H, 0.25);
    const double unweighted = depth_regularization(depth, flat);
    Image<double> edgy = flat;
    for (int v = 0; v < H; ++v)
      for (int u = 3; u < W; ++u) edgy(u, v) = 0.25 + 40.0;  // huge co-located edge
    const double weighted = depth_regularization(depth, edgy);
    REQUIRE(unweighted == Approx(double(H)));  // one unit jump per row
    REQUIRE(weighted < 1e-10);
  }
  SECTION("backward matches finite differences") {
    Rng rng(9);
    Image<double> depth(W, H), mean(W, H);
    for (size_t i = 0; i < depth.size(); ++i) {
      depth[i] = 2.0 + 0.5 * rng.uniform();
      mean[i] = rng.uniform();
    }
    Image<double> grad(W, H, 0.0);
    depth_regularization_backward(depth, mean, 1.0, grad);
    const double h = 1e-6;
    for (int k = 0; k < 10; ++k) {
      const size_t idx = rng.uniform_index(depth.size());
      Image<double> plus = depth, minus = depth;
      plus[idx] += h;
      minus[idx] -= h;
      const double fd =
          (depth_regularization(plus, mean) - depth_regularization(minus, mean)) / (2 * h);
      REQUIRE(fd == Approx(grad[idx]).margin(1e-6));
    }
  }
  SECTION("size mismatch is rejected") {
    REQUIRE_THROWS_AS(depth_regularization(Image<double>(3, 3), Image<double>(4, 3)),
                      DimensionMismatch);
  }
}

TEST_CASE("schedules and learning-rate decay", "[optimizer]") {
  SECTION("piecewise schedule resolves by epoch fraction") {
    const Schedule<double> tau = default_tau_schedule();
    REQUIRE(tau.at(0, 100) == 0.3);
    REQUIRE(tau.at(24, 100) == 0.3);
    REQUIRE(tau.at(25, 100) == 0.1);
    REQUIRE(tau.at(50, 100) == 0.03);
    REQUIRE(tau.at(99, 100) == 0.01);
    const Schedule<int> stride = default_stride_schedule();
    REQUIRE(stride.at(0, 100) == 4);
    REQUIRE(stride.at(30, 100) == 2);
    REQUIRE(stride.at(60, 100) == 1);
  }
  SECTION("learning rate follows the stepped decay exactly") {
    OptimizerState state;
    for (int epoch : {0, 7, 14, 15, 29, 30, 44, 45, 149}) {
      const double expected = 5e-5 * std::pow(0.9, double(epoch / 15));
      REQUIRE(state.lr_at(epoch) == expected);
    }
  }
}

TEST_CASE("step updates the field against rendered shadows", "[optimizer]") {
  const Scene scene = bump_scene(16, 2, 5);
  DepthFieldConfig cfg;
  cfg.image_width = 16;
  cfg.image_height = 16;
  cfg.depth_offset = scene.depth_offset();
  cfg.depth_scale = scene.depth_scale();

  SECTION("zero learning rate leaves parameters and loss unchanged") {
    DepthField field = DepthField::init(cfg, 2);
    const Eigen::VectorXd before = field.params();
    OptimizerState state;
    StepSettings s;
    s.tau = 0.1;
    s.lambda = 1e-3;
    const LossTerms first = step(field, scene, state, s, 0.0);
    REQUIRE(field.params() == before);
    const LossTerms second = step(field, scene, state, s, 0.0);
    REQUIRE(first.total == second.total);
  }

  SECTION("loss decomposition identity holds") {
    DepthField field = DepthField::init(cfg, 3);
    OptimizerState state;
    StepSettings s;
    s.tau = 0.1;
    s.lambda = 0.37;
    const LossTerms terms = step(field, scene, state, s, 1e-5);
    REQUIRE(terms.rec_per_light.size() == 2);
    for (double r : terms.rec_per_light) REQUIRE(r >= 0.0);
    REQUIRE(terms.depth_reg >= 0.0);
    REQUIRE(std::abs(terms.total - (terms.rec_mean() + terms.lambda * terms.depth_reg)) <= 1e-12);
  }

  SECTION("lambda zero skips the regularizer") {
    DepthField field = DepthField::init(cfg, 3);
    StepSettings s;
    s.tau = 0.1;
    s.lambda = 0.0;
    const LossTerms terms = evaluate_loss(field, scene, s);
    REQUIRE(terms.depth_reg == 0.0);
    REQUIRE(terms.total == terms.rec_mean());
  }

  SECTION("a converged depth grid reconstructs the shadows") {
    // render the ground-truth grid itself: residual is only boundary softness
    const CameraModel cam = make_scene_camera(64, 64, 2.0, 3.0);
    Image<double> grid = make_terrain(TerrainKind::gaussian_bumps,
                                      TerrainParams{64, 64, 3.0, 0.5, 1, 0.10, -1, 0.2}, 5);
    auto lights = make_ring_rig_at_elevation(cam, 1, 2.3, 40.0, {0, 0, 3.0});
    const ShadowMap truth = render_shadow_map_r3_oracle(grid, cam, lights[0]);
    long shadow_px = 0;
    for (size_t i = 0; i < truth.values.size(); ++i)
      if (truth.values[i] == 0.0) ++shadow_px;
    REQUIRE(shadow_px > 100);
    const ShadowMap pred = render_shadow_map_r2(grid, cam, lights[0], 0.01, 1);
    REQUIRE(reconstruction_loss(pred, truth) < 0.02);
  }

  SECTION("per-light work is deterministic across worker counts") {
    DepthField field = DepthField::init(cfg, 7);
    StepSettings s1;
    s1.tau = 0.1;
    s1.lambda = 1e-3;
    StepSettings s2 = s1;
    s2.workers = 2;
    Eigen::VectorXd g1, g2;
    loss_with_grads(field, scene, s1, g1);
    loss_with_grads(field, scene, s2, g2);
    REQUIRE(g1 == g2);
  }
}

TEST_CASE("end-to-end loss gradients match finite differences", "[optimizer]") {
  const Scene scene = bump_scene(16, 3, 11);
  DepthFieldConfig cfg;
  cfg.image_width = 16;
  cfg.image_height = 16;
  cfg.depth_offset = scene.depth_offset();
  cfg.depth_scale = scene.depth_scale();
  const DepthField field = DepthField::init(cfg, 21);

  StepSettings s;
  s.tau = 0.1;
  s.lambda = 1e-3;

  Eigen::VectorXd grad;
  loss_with_grads(field, scene, s, grad);
  REQUIRE(grad.cwiseAbs().maxCoeff() > 0.0);

  Rng rng(1);
  const double h = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const int idx = int(rng.uniform_index(uint64_t(field.param_count())));
    DepthField plus = field, minus = field;
    plus.params()[idx] += h;
    minus.params()[idx] -= h;
    const double fd =
        (evaluate_loss(plus, scene, s).total - evaluate_loss(minus, scene, s).total) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[idx]), 1e-7});
    REQUIRE(std::abs(fd - grad[idx]) / denom < 1e-3);
  }
}

TEST_CASE("fit runs the one-shot optimization", "[optimizer][slow]") {
  const Scene scene = bump_scene(24, 4, 9);

  SECTION("zero epochs returns the initialized field") {
    FitConfig cfg;
    cfg.max_epochs = 0;
    cfg.seed = 4;
    const DepthField fitted = fit(scene, cfg);
    DepthFieldConfig fc;
    fc.image_width = 24;
    fc.image_height = 24;
    fc.depth_offset = scene.depth_offset();
    fc.depth_scale = scene.depth_scale();
    REQUIRE(fitted.params() == DepthField::init(fc, 4).params());
  }

  SECTION("loss trends downward over the first hundred epochs") {
    FitConfig cfg;
    cfg.max_epochs = 100;
    cfg.seed = 2;
    cfg.lambda = 1e-4;
    cfg.tau_schedule = Schedule<double>{{{0.0, 0.1}}};
    cfg.stride_schedule = Schedule<int>{{{0.0, 1}}};
    cfg.lr0 = 1e-3;
    cfg.plateau_patience = 1000;
    std::vector<double> losses;
    cfg.on_epoch = [&](const TraceRow& row) { losses.push_back(row.total); };
    fit(scene, cfg);
    REQUIRE(losses.size() == 100);
    auto avg = [&](int a, int b) {
      double s = 0;
      for (int i = a; i < b; ++i) s += losses[size_t(i)];
      return s / double(b - a);
    };
    REQUIRE(avg(90, 100) < avg(0, 10));
  }

  SECTION("same seed gives bitwise-identical parameters") {
    FitConfig cfg;
    cfg.max_epochs = 12;
    cfg.seed = 31;
    cfg.lambda = 1e-4;
    const DepthField a = fit(scene, cfg);
    const DepthField b = fit(scene, cfg);
    REQUIRE(a.params() == b.params());
  }
}
