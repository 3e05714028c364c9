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

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "shadowfit/io.hpp"
#include "shadowfit/metrics.hpp"
#include "shadowfit/optimizer.hpp"
#include "shadowfit/shadow_renderer.hpp"
#include "shadowfit/synthetic.hpp"

namespace fs = std::filesystem;
using namespace shadowfit;

namespace {

Schedule<double> parse_double_schedule(const std::string& text) {
  Schedule<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw BadConfig("schedule: expected fraction:value pairs, got '" + item + "'");
    out.entries.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
  }
  if (out.entries.empty()) throw BadConfig("schedule: no entries in '" + text + "'");
  return out;
}

Schedule<int> parse_int_schedule(const std::string& text) {
  Schedule<int> out;
  for (const auto& e : parse_double_schedule(text).entries)
    out.entries.push_back({e.fraction, int(std::lround(e.value))});
  return out;
}

Image<double> depth_grid_of(const DepthField& field) {
  DepthField::EvalTape tape;
  const Eigen::VectorXd d = field.eval_grid_with_tape(tape);
  Image<double> grid(field.config().image_width, field.config().image_height);
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = d[long(i)];
  return grid;
}

int run_bake(const std::string& out_dir, const std::string& terrain, int size, double extent,
             double scene_depth, double amplitude, int features, double feature_scale, int column,
             double pillar_frac, int n_lights, const std::string& pattern, double distance,
             double elevation, uint64_t seed, const std::string& polarity) {
  TerrainParams params;
  params.width = size;
  params.height = size;
  params.base_depth = scene_depth;
  params.amplitude = amplitude;
  params.features = features;
  params.feature_scale = feature_scale;
  params.column = column;
  params.pillar_frac = pillar_frac;
  const CameraModel camera = make_scene_camera(size, size, extent, scene_depth);
  const Eigen::Vector3d center(0.0, 0.0, scene_depth);

  Image<double> height_map = make_terrain(terrain_kind_from_string(terrain), params, seed);
  std::vector<LightSource> lights;
  if (pattern == "ring") {
    lights = make_ring_rig_at_elevation(camera, n_lights, distance, elevation, center);
  } else {
    const double e = elevation * M_PI / 180.0;
    lights = make_light_rig(camera, n_lights, distance * std::cos(e), distance * std::sin(e),
                            light_pattern_from_string(pattern), seed, center);
  }
  const SyntheticScene scene = bake_scene(std::move(height_map), camera, std::move(lights), seed);
  const std::string config = save_scene(out_dir, scene, polarity_from_string(polarity));
  std::printf("baked %s terrain (%dx%d, %d lights) -> %s\n", terrain.c_str(), size, size,
              n_lights, config.c_str());
  return 0;
}

int run_reconstruct(const std::string& config_path, const std::string& out_dir, uint64_t seed,
                    int epochs, double lambda, const std::string& tau_schedule,
                    const std::string& stride_schedule, double lr, int supersample, int threads,
                    int octaves, const std::string& polarity,
                    std::optional<double> depth_offset, std::optional<double> depth_scale) {
  std::optional<Polarity> pol;
  if (!polarity.empty()) pol = polarity_from_string(polarity);
  LoadedScene loaded = load_scene(config_path, pol);

  FitConfig cfg;
  cfg.max_epochs = epochs;
  cfg.seed = seed;
  cfg.lambda = lambda;
  cfg.lr0 = lr;
  cfg.supersample = supersample;
  cfg.workers = threads;
  cfg.encoding.octaves = octaves;
  if (!tau_schedule.empty()) cfg.tau_schedule = parse_double_schedule(tau_schedule);
  if (!stride_schedule.empty()) cfg.stride_schedule = parse_int_schedule(stride_schedule);

  Scene scene = loaded.scene;
  if (depth_offset || depth_scale) {
    scene = Scene(loaded.scene.camera(), loaded.scene.lights(), loaded.scene.truth(),
                  depth_offset.value_or(loaded.scene.depth_offset()),
                  depth_scale.value_or(loaded.scene.depth_scale()));
  }

  fs::create_directories(out_dir);
  std::ofstream trace((fs::path(out_dir) / "trace.csv").string());
  trace << "epoch,total_loss,rec_loss,depth_reg,lr,tau,stride\n";
  trace.precision(12);
  cfg.on_epoch = [&](const TraceRow& row) {
    trace << row.epoch << ',' << row.total << ',' << row.rec << ',' << row.depth_reg << ','
          << row.lr << ',' << row.tau << ',' << row.stride << '\n';
    if (row.epoch % 25 == 0)
      std::printf("epoch %4d  loss %.6f  rec %.6f  tau %.3g  stride %d\n", row.epoch, row.total,
                  row.rec, row.tau, row.stride);
  };

  const DepthField field = fit(scene, cfg);

  const Image<double> depth = depth_grid_of(field);
  const NormalMap normals = normals_from_depth(depth, scene.camera());
  write_pfm((fs::path(out_dir) / "depth.pfm").string(), depth);
  write_pfm_normals((fs::path(out_dir) / "normals.pfm").string(), normals);
  {
    std::ofstream ckpt((fs::path(out_dir) / "field.bin").string(), std::ios::binary);
    field.save(ckpt);
  }
  std::printf("wrote %s/{depth.pfm,normals.pfm,field.bin,trace.csv}\n", out_dir.c_str());

  if (loaded.ground_truth_depth) {
    const Image<double> truth = read_pfm(*loaded.ground_truth_depth);
    const NormalMap truth_normals = normals_from_depth(truth, scene.camera());
    std::printf("nmze=%.4f\n", nmze(depth, truth));
    std::printf("normal_mae_deg=%.2f\n", normal_mae(normals, truth_normals));
  }
  return 0;
}

int run_eval(const std::string& pred_path, const std::string& truth_path,
             const std::string& pred_normals_path, const std::string& truth_normals_path,
             const std::string& config_path) {
  const Image<double> pred = read_pfm(pred_path);
  const Image<double> truth = read_pfm(truth_path);
  std::printf("nmze=%.6f\n", nmze(pred, truth));

  if (!pred_normals_path.empty() && !truth_normals_path.empty()) {
    std::printf("normal_mae_deg=%.4f\n", normal_mae(read_pfm_normals(pred_normals_path),
                                                    read_pfm_normals(truth_normals_path)));
  } else if (!config_path.empty()) {
    const LoadedScene loaded = load_scene(config_path);
    const NormalMap a = normals_from_depth(pred, loaded.scene.camera());
    const NormalMap b = normals_from_depth(truth, loaded.scene.camera());
    std::printf("normal_mae_deg=%.4f\n", normal_mae(a, b));
  }
  return 0;
}

int run_shadows(const std::string& config_path, const std::string& method,
                const std::string& depth_path, const std::string& field_path, double tau,
                int stride, int supersample, const std::string& out_dir,
                const std::string& polarity) {
  std::optional<Polarity> pol;
  if (!polarity.empty()) pol = polarity_from_string(polarity);
  const LoadedScene loaded = load_scene(config_path, pol);
  const CameraModel& cam = loaded.scene.camera();

  Image<double> depth(cam.width(), cam.height());
  if (!field_path.empty()) {
    std::ifstream in(field_path, std::ios::binary);
    if (!in) throw MissingFile("field checkpoint not found: " + field_path);
    depth = depth_grid_of(DepthField::load(in));
  } else {
    std::string src = depth_path;
    if (src.empty()) {
      if (!loaded.ground_truth_depth)
        throw BadConfig("shadows: no --depth/--field given and the scene has no ground truth");
      src = *loaded.ground_truth_depth;
    }
    depth = read_pfm(src);
    if (depth.width() != cam.width() || depth.height() != cam.height())
      throw SizeMismatch("shadows: depth map size does not match the scene camera");
  }

  fs::create_directories(out_dir);
  const Polarity out_pol = loaded.polarity;
  for (int j = 0; j < loaded.scene.n_lights(); ++j) {
    ShadowMap map;
    if (method == "r3") {
      map = render_shadow_map_r3_oracle(depth, cam, loaded.scene.lights()[size_t(j)], nullptr, j);
    } else if (method == "r2") {
      map = render_shadow_map_r2(depth, cam, loaded.scene.lights()[size_t(j)], tau, stride,
                                 supersample, nullptr, nullptr, j);
    } else {
      throw BadConfig("shadows: --method must be r2 or r3, got '" + method + "'");
    }
    char name[32];
    std::snprintf(name, sizeof(name), "shadow_%02d.pgm", j);
    write_shadow_pgm((fs::path(out_dir) / name).string(), map, out_pol);
    if (stride > 1) {
      Image<uint8_t> cov(cam.width(), cam.height());
      for (size_t i = 0; i < cov.size(); ++i) cov[i] = map.coverage[i] > 0 ? 255 : 0;
      std::snprintf(name, sizeof(name), "coverage_%02d.pgm", j);
      write_pgm((fs::path(out_dir) / name).string(), cov);
    }
  }
  std::printf("wrote %d %s shadow maps to %s\n", loaded.scene.n_lights(), method.c_str(),
              out_dir.c_str());
  return 0;
}

int run_gradcheck(int size, uint64_t seed, double tau, int n_lights) {
  const CameraModel cam = make_scene_camera(size, size, 2.0, 3.0);
  Image<double> grid = make_terrain(
      TerrainKind::gaussian_bumps, TerrainParams{size, size, 3.0, 0.4, 2, 0.16, -1, 0.2}, seed);
  auto lights = make_ring_rig_at_elevation(cam, n_lights, 2.3, 40.0, {0, 0, 3.0});
  const Scene scene = to_scene(bake_scene(grid, cam, lights, seed));

  DepthFieldConfig fcfg;
  fcfg.image_width = size;
  fcfg.image_height = size;
  fcfg.depth_offset = scene.depth_offset();
  fcfg.depth_scale = scene.depth_scale();
  const DepthField field = DepthField::init(fcfg, seed + 1);
  Rng rng(seed + 2);
  bool ok = true;

  {  // per-layer field gradients against central differences
    std::vector<ImagePoint> pts;
    for (int i = 0; i < 12; ++i)
      pts.emplace_back(rng.uniform(0, size - 1), rng.uniform(0, size - 1));
    Eigen::VectorXd upstream(12);
    for (int i = 0; i < 12; ++i) upstream(i) = rng.uniform(-1, 1);
    DepthField::EvalTape tape;
    field.eval_batch_with_tape(pts, tape);
    const FieldGradients g = field.backward(tape, upstream);
    double worst = 0.0;
    const double h = 1e-4;
    for (int layer = 0; layer < field.n_affine(); ++layer) {
      const auto [begin, end] = field.layer_span(layer);
      for (int k = 0; k < 4; ++k) {
        const int idx = begin + int(rng.uniform_index(uint64_t(end - begin)));
        DepthField plus = field, minus = field;
        plus.params()[idx] += h;
        minus.params()[idx] -= h;
        const double fd =
            (upstream.dot(plus.eval_batch(pts)) - upstream.dot(minus.eval_batch(pts))) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(g.d_params[idx]), 1e-8});
        worst = std::max(worst, std::abs(fd - g.d_params[idx]) / denom);
      }
    }
    const bool pass = worst < 1e-4;
    ok = ok && pass;
    std::printf("[%s] per-layer field gradients: max rel err %.3g (tol 1e-4)\n",
                pass ? "PASS" : "FAIL", worst);
  }

  {  // scan-line gradients against depth perturbations, on a ray with signal
    const LightSource& light = scene.lights()[0];
    const Eigen::Vector3d lmc = light.position - cam.center();
    RayScan scan;
    Image<double> analytic(size, size, 0.0);
    std::vector<double> w;
    ImagePoint target(0, 0);
    bool has_signal = false;
    for (int v = 0; v < size && !has_signal; ++v) {
      target = ImagePoint(0.0, double(v));
      scan = detail::scan_grid_ray(grid, cam, lmc, light, target, tau, 1);
      w.assign(scan.size(), 0.0);
      for (auto& x : w) x = rng.uniform(-1, 1);
      std::vector<double> d_sample(scan.size(), 0.0);
      detail::scan_depth_grads(scan, lmc, tau, w, d_sample);
      analytic.fill(0.0);
      detail::scatter_depth_grads(scan, d_sample, analytic);
      for (size_t i = 0; i < analytic.size() && !has_signal; ++i)
        if (std::abs(analytic[i]) > 1e-6) has_signal = true;
    }
    double worst = 0.0;
    const double h = 1e-3;
    int checked = 0;
    for (size_t pix = 0; pix < analytic.size() && checked < 6; ++pix) {
      if (std::abs(analytic[pix]) < 1e-6) continue;
      ++checked;
      Image<double> plus = grid, minus = grid;
      plus[pix] += h;
      minus[pix] -= h;
      auto weighted = [&](const Image<double>& g2) {
        const RayScan s = detail::scan_grid_ray(g2, cam, lmc, light, target, tau, 1);
        double acc = 0.0;
        for (size_t i = 0; i < s.size(); ++i) acc += w[i] * s.shadow[i];
        return acc;
      };
      const double fd = (weighted(plus) - weighted(minus)) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic[pix]), 1e-7});
      worst = std::max(worst, std::abs(fd - analytic[pix]) / denom);
    }
    const bool pass = worst < 1e-3 && checked > 0;
    ok = ok && pass;
    std::printf("[%s] scan-line depth gradients: max rel err %.3g over %d pixels (tol 1e-3)\n",
                pass ? "PASS" : "FAIL", worst, checked);
  }

  {  // end-to-end loss gradient
    StepSettings s;
    s.tau = tau;
    s.lambda = 1e-3;
    Eigen::VectorXd gradient;
    loss_with_grads(field, scene, s, gradient);
    double worst = 0.0;
    const double h = 1e-5;
    for (int k = 0; k < 20; ++k) {
      const int idx = int(rng.uniform_index(uint64_t(field.param_count())));
      DepthField plus = field, minus = field;
      plus.params()[idx] += h;
      minus.params()[idx] -= h;
      const double fd =
          (evaluate_loss(plus, scene, s).total - evaluate_loss(minus, scene, s).total) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(gradient[idx]), 1e-7});
      worst = std::max(worst, std::abs(fd - gradient[idx]) / denom);
    }
    const bool pass = worst < 1e-3;
    ok = ok && pass;
    std::printf("[%s] end-to-end loss gradients: max rel err %.3g (tol 1e-3)\n",
                pass ? "PASS" : "FAIL", worst);
  }

  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shape-from-shadow reconstruction via a differentiable line-scan renderer"};
  app.require_subcommand(1);

  // bake
  auto* bake = app.add_subcommand("bake", "generate a synthetic scene with oracle shadow maps");
  std::string bake_out = "scene", terrain = "gaussian_bumps", pattern = "ring",
              bake_polarity = "white_lit";
  int bake_size = 64, features = 2, column = -1, bake_lights = 16;
  double extent = 2.0, scene_depth = 3.0, amplitude = 0.35, feature_scale = 0.16,
         pillar_frac = 0.2, distance = 2.3, elevation = 40.0;
  uint64_t bake_seed = 0;
  bake->add_option("--out", bake_out, "output directory");
  bake->add_option("--terrain", terrain, "plane|step|pillar|gaussian_bumps|ridge");
  bake->add_option("--size", bake_size, "grid size (pixels per side)");
  bake->add_option("--extent", extent, "world width of the frustum at the scene depth");
  bake->add_option("--scene-depth", scene_depth, "depth of the base plane");
  bake->add_option("--amplitude", amplitude, "feature height");
  bake->add_option("--features", features, "bump count");
  bake->add_option("--feature-scale", feature_scale, "feature footprint fraction");
  bake->add_option("--column", column, "step column");
  bake->add_option("--pillar-frac", pillar_frac, "pillar half-width fraction");
  bake->add_option("--lights", bake_lights, "light count");
  bake->add_option("--pattern", pattern, "ring|dome|random");
  bake->add_option("--distance", distance, "light distance from the scene center");
  bake->add_option("--elevation", elevation, "light elevation in degrees");
  bake->add_option("--seed", bake_seed, "random seed");
  bake->add_option("--polarity", bake_polarity, "white_lit|white_shadow");

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "fit a depth field to a scene's shadow maps");
  std::string rec_config, rec_out = "out", tau_schedule, stride_schedule, rec_polarity;
  uint64_t rec_seed = 0;
  int epochs = 500, supersample = 1, threads = 1, octaves = 6;
  double lambda = 5e-4, lr = 5e-5;
  std::optional<double> depth_offset, depth_scale;
  rec->add_option("--config", rec_config, "scene config path")->required();
  rec->add_option("--out", rec_out, "output directory");
  rec->add_option("--seed", rec_seed, "random seed");
  rec->add_option("--epochs", epochs, "maximum epochs");
  rec->add_option("--lambda", lambda, "depth regularization weight");
  rec->add_option("--tau-schedule", tau_schedule, "fraction:tau pairs, e.g. 0:0.3,0.5:0.03");
  rec->add_option("--stride-schedule", stride_schedule, "fraction:stride pairs");
  rec->add_option("--lr", lr, "initial learning rate");
  rec->add_option("--supersample", supersample, "scan samples per pixel step");
  rec->add_option("--threads", threads, "parallel workers over lights");
  rec->add_option("--octaves", octaves, "positional encoding octaves");
  rec->add_option("--polarity", rec_polarity, "override the config polarity");
  rec->add_option("--depth-offset", depth_offset, "output transform offset");
  rec->add_option("--depth-scale", depth_scale, "output transform scale");

  // eval
  auto* ev = app.add_subcommand("eval", "compare depth (and normal) maps");
  std::string pred_path, truth_path, pred_normals, truth_normals, eval_config;
  ev->add_option("--pred", pred_path, "predicted depth PFM")->required();
  ev->add_option("--truth", truth_path, "ground-truth depth PFM")->required();
  ev->add_option("--pred-normals", pred_normals, "predicted normals PFM");
  ev->add_option("--truth-normals", truth_normals, "ground-truth normals PFM");
  ev->add_option("--config", eval_config, "scene config (derives normals from depth)");

  // shadows
  auto* sh = app.add_subcommand("shadows", "render shadow maps from a depth map or checkpoint");
  std::string sh_config, sh_method = "r2", sh_depth, sh_field, sh_out = "shadows", sh_polarity;
  double sh_tau = 0.01;
  int sh_stride = 1, sh_supersample = 1;
  sh->add_option("--config", sh_config, "scene config path")->required();
  sh->add_option("--method", sh_method, "r2|r3");
  sh->add_option("--depth", sh_depth, "depth PFM (defaults to the scene ground truth)");
  sh->add_option("--field", sh_field, "field checkpoint instead of a depth map");
  sh->add_option("--tau", sh_tau, "sigmoid temperature (r2)");
  sh->add_option("--stride", sh_stride, "boundary stride (r2)");
  sh->add_option("--supersample", sh_supersample, "scan samples per pixel step");
  sh->add_option("--out", sh_out, "output directory");
  sh->add_option("--polarity", sh_polarity, "override the config polarity");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  int gc_size = 16, gc_lights = 3;
  uint64_t gc_seed = 0;
  double gc_tau = 0.1;
  gc->add_option("--size", gc_size, "scene size");
  gc->add_option("--seed", gc_seed, "random seed");
  gc->add_option("--tau", gc_tau, "sigmoid temperature");
  gc->add_option("--lights", gc_lights, "light count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (bake->parsed())
      return run_bake(bake_out, terrain, bake_size, extent, scene_depth, amplitude, features,
                      feature_scale, column, pillar_frac, bake_lights, pattern, distance,
                      elevation, bake_seed, bake_polarity);
    if (rec->parsed())
      return run_reconstruct(rec_config, rec_out, rec_seed, epochs, lambda, tau_schedule,
                             stride_schedule, lr, supersample, threads, octaves, rec_polarity,
                             depth_offset, depth_scale);
    if (ev->parsed())
      return run_eval(pred_path, truth_path, pred_normals, truth_normals, eval_config);
    if (sh->parsed())
      return run_shadows(sh_config, sh_method, sh_depth, sh_field, sh_tau, sh_stride,
                         sh_supersample, sh_out, sh_polarity);
    if (gc->parsed()) return run_gradcheck(gc_size, gc_seed, gc_tau, gc_lights);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
