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
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "shadowfit/depth_field.hpp"
#include "shadowfit/errors.hpp"
#include "shadowfit/geometry.hpp"
#include "shadowfit/image.hpp"

namespace shadowfit {

// arccos has unbounded slope at +-1; the clamp keeps gradients finite. The
// epsilon in the cosine denominator matches the scan-angle formula.
inline constexpr double kCosineClamp = 1.0 - 1e-7;
inline constexpr double kAngleEps = 1e-8;

/// Per-light shadow estimate. values in [0,1] with 1 = illuminated; coverage
/// counts how many scan samples landed in each pixel (0 = not rendered, such
/// pixels carry no signal and are excluded from losses).
struct ShadowMap {
  Image<double> values;
  Image<int> coverage;
  int light_index = -1;

  ShadowMap() = default;
  ShadowMap(int width, int height, int light = -1)
      : values(width, height, 0.0), coverage(width, height, 0), light_index(light) {}

  bool covered(int u, int v) const { return coverage(u, v) > 0; }
};

/// Scan-line sample counters, used to verify the linear-time behaviour of
/// boundary sampling against the all-pixels oracle.
struct RenderStats {
  long rays = 0;
  long samples = 0;
};

/// Angles between the first light ray of a scan line and every subsequent
/// one, per the line-of-sight construction: V_i = L - R_i, ang[i] is the
/// angle(V_0, V_i) with an epsilon-stabilized cosine, ang[0] = 0.
inline std::vector<double> scan_angles(const LightSource& light,
                                       std::span<const WorldPoint> world_points) {
  if (world_points.empty()) throw InvalidParams("scan_angles: need at least one point");
  std::vector<double> angles(world_points.size(), 0.0);
  const Eigen::Vector3d v0 = light.position - world_points[0];
  const double n0 = v0.norm();
  for (size_t i = 1; i < world_points.size(); ++i) {
    const Eigen::Vector3d vi = light.position - world_points[i];
    const double c = v0.dot(vi) / (n0 * vi.norm() + kAngleEps);
    angles[i] = std::acos(std::clamp(c, -kCosineClamp, kCosineClamp));
  }
  return angles;
}

struct LineShadow {
  std::vector<double> running_max;
  std::vector<double> shadow;
  std::vector<int> holder;  // index of the running-max holder, ties -> earlier
};

/// Soft visibility along one scan line: running max of the angles, then
/// s = 2*sigmoid((ang - running_max)/tau). Points at their own running max
/// (visible) get exactly 1.
inline LineShadow line_shadow(std::span<const double> angles, double tau) {
  if (tau <= 0.0) throw InvalidParams("line_shadow: tau must be positive");
  LineShadow out;
  const size_t n = angles.size();
  out.running_max.resize(n);
  out.shadow.resize(n);
  out.holder.resize(n);
  double best = -1.0;
  int best_idx = 0;
  for (size_t i = 0; i < n; ++i) {
    if (angles[i] > best) {
      best = angles[i];
      best_idx = int(i);
    }
    out.running_max[i] = best;
    out.holder[i] = best_idx;
    out.shadow[i] = 2.0 * detail::sigmoid((angles[i] - best) / tau);
  }
  return out;
}

/// One scan line: samples keep their exact image-plane positions; the pixel
/// index is where the sample's shadow value is deposited.
struct RayScan {
  std::vector<Eigen::Vector2d> pos;  // exact sample positions
  std::vector<double> alpha;         // segment parameter per sample
  std::vector<int> pixel;            // nearest pixel, row-major index
  std::vector<Eigen::Vector3d> dir;  // unprojection direction at pos
  std::vector<double> depth;
  std::vector<double> cos_raw;       // pre-clamp cosine (angle backward gate)
  std::vector<double> angle;
  std::vector<double> running_max;
  std::vector<double> shadow;
  std::vector<int> holder;           // running-max holder index

  size_t size() const { return pos.size(); }
};

namespace detail {

struct BilinearCell {
  int x0, y0, x1, y1;
  double w00, w10, w01, w11;
};

inline BilinearCell bilinear_cell(double x, double y, int width, int height) {
  x = std::clamp(x, 0.0, double(width - 1));
  y = std::clamp(y, 0.0, double(height - 1));
  BilinearCell c;
  c.x0 = std::min(int(x), width >= 2 ? width - 2 : 0);
  c.y0 = std::min(int(y), height >= 2 ? height - 2 : 0);
  c.x1 = std::min(c.x0 + 1, width - 1);
  c.y1 = std::min(c.y0 + 1, height - 1);
  const double fx = x - c.x0, fy = y - c.y0;
  c.w00 = (1 - fx) * (1 - fy);
  c.w10 = fx * (1 - fy);
  c.w01 = (1 - fx) * fy;
  c.w11 = fx * fy;
  return c;
}

inline double bilinear(const Image<double>& grid, double x, double y) {
  const BilinearCell c = bilinear_cell(x, y, grid.width(), grid.height());
  return c.w00 * grid(c.x0, c.y0) + c.w10 * grid(c.x1, c.y0) + c.w01 * grid(c.x0, c.y1) +
         c.w11 * grid(c.x1, c.y1);
}

/// Fills pos/alpha/pixel/dir for the scan from the light's projection to
/// `target` (throws DegenerateRay when they coincide).
inline void build_ray_samples(const CameraModel& camera, const LightSource& light,
                              const ImagePoint& target, int supersample, RayScan& scan) {
  const ImageRay ray = image_ray(light, target, camera.width(), camera.height(), supersample);
  const size_t n = ray.points.size();
  scan.pos = ray.points;
  scan.alpha = ray.alphas;
  scan.pixel.resize(n);
  scan.dir.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const int u = int(std::llround(ray.points[i].x()));
    const int v = int(std::llround(ray.points[i].y()));
    scan.pixel[i] = v * camera.width() + u;
    scan.dir[i] = camera.unproject_dir(ray.points[i]);
  }
}

/// Depth per sample by bilinear interpolation of the grid between pixel
/// centers (the grid is the field evaluated on the pixel lattice).
inline void sample_depths(const Image<double>& grid, RayScan& scan) {
  scan.depth.resize(scan.size());
  for (size_t i = 0; i < scan.size(); ++i)
    scan.depth[i] = bilinear(grid, scan.pos[i].x(), scan.pos[i].y());
}

/// Forward scan: world point of sample i is C + depth_i * dir_i, angles per
/// the stabilized cosine, soft shadows from the running max.
inline void scan_forward(const Eigen::Vector3d& light_minus_center, double tau, RayScan& scan) {
  const size_t n = scan.size();
  scan.cos_raw.resize(n);
  scan.angle.resize(n);
  scan.running_max.resize(n);
  scan.shadow.resize(n);
  scan.holder.resize(n);
  if (n == 0) return;

  const Eigen::Vector3d v0 = light_minus_center - scan.depth[0] * scan.dir[0];
  const double n0 = v0.norm();
  scan.cos_raw[0] = 1.0;
  scan.angle[0] = 0.0;
  double best = 0.0;
  int best_idx = 0;
  scan.running_max[0] = 0.0;
  scan.holder[0] = 0;
  scan.shadow[0] = 1.0;
  for (size_t i = 1; i < n; ++i) {
    const Eigen::Vector3d vi = light_minus_center - scan.depth[i] * scan.dir[i];
    const double c = v0.dot(vi) / (n0 * vi.norm() + kAngleEps);
    scan.cos_raw[i] = c;
    const double ang = std::acos(std::clamp(c, -kCosineClamp, kCosineClamp));
    scan.angle[i] = ang;
    if (ang > best) {
      best = ang;
      best_idx = int(i);
    }
    scan.running_max[i] = best;
    scan.holder[i] = best_idx;
    scan.shadow[i] = 2.0 * sigmoid((ang - best) / tau);
  }
}

/// d(sum_i d_shadow[i] * s_i)/d(depth_j) per sample. The running max routes
/// its subgradient to the holding sample; the first sample's depth also feeds
/// every angle through the reference vector V_0.
inline void scan_depth_grads(const RayScan& scan, const Eigen::Vector3d& light_minus_center,
                             double tau, std::span<const double> d_shadow,
                             std::span<double> d_depth) {
  const size_t n = scan.size();
  if (n == 0) return;

  std::vector<double> g_ang(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double sig = scan.shadow[i] * 0.5;  // sigmoid((ang - max)/tau)
    const double gz = d_shadow[i] * 2.0 * sig * (1.0 - sig) / tau;
    g_ang[i] += gz;
    g_ang[size_t(scan.holder[i])] -= gz;
  }

  const Eigen::Vector3d v0 = light_minus_center - scan.depth[0] * scan.dir[0];
  const double n0 = v0.norm();
  double g_depth0 = 0.0;
  for (size_t i = 1; i < n; ++i) {
    if (g_ang[i] == 0.0) continue;
    const double c = scan.cos_raw[i];
    if (std::abs(c) >= kCosineClamp) continue;  // clamped: flat, no gradient
    const double g_cos = -g_ang[i] / std::sqrt(1.0 - c * c);
    const Eigen::Vector3d vi = light_minus_center - scan.depth[i] * scan.dir[i];
    const double ni = vi.norm();
    const double denom = n0 * ni + kAngleEps;
    const Eigen::Vector3d dc_dvi = (v0 - (c * n0 / ni) * vi) / denom;
    const Eigen::Vector3d dc_dv0 = (vi - (c * ni / n0) * v0) / denom;
    d_depth[i] += g_cos * dc_dvi.dot(-scan.dir[i]);
    g_depth0 += g_cos * dc_dv0.dot(-scan.dir[0]);
  }
  d_depth[0] += g_depth0;
}

/// Distributes per-sample depth gradients back onto the grid through the
/// bilinear sampling weights.
inline void scatter_depth_grads(const RayScan& scan, std::span<const double> d_depth,
                                Image<double>& d_grid) {
  for (size_t i = 0; i < scan.size(); ++i) {
    if (d_depth[i] == 0.0) continue;
    const BilinearCell c =
        bilinear_cell(scan.pos[i].x(), scan.pos[i].y(), d_grid.width(), d_grid.height());
    d_grid(c.x0, c.y0) += d_depth[i] * c.w00;
    d_grid(c.x1, c.y0) += d_depth[i] * c.w10;
    d_grid(c.x0, c.y1) += d_depth[i] * c.w01;
    d_grid(c.x1, c.y1) += d_depth[i] * c.w11;
  }
}

inline RayScan scan_grid_ray(const Image<double>& depth, const CameraModel& camera,
                             const Eigen::Vector3d& light_minus_center, const LightSource& light,
                             const ImagePoint& target, double tau, int supersample) {
  RayScan scan;
  build_ray_samples(camera, light, target, supersample, scan);
  sample_depths(depth, scan);
  scan_forward(light_minus_center, tau, scan);
  return scan;
}

/// Boundary pixels in a fixed clockwise order starting at (0, 0).
inline std::vector<ImagePoint> boundary_targets(int width, int height, int stride) {
  std::vector<ImagePoint> cycle;
  for (int u = 0; u < width; ++u) cycle.emplace_back(u, 0);
  for (int v = 1; v < height; ++v) cycle.emplace_back(width - 1, v);
  if (height > 1)
    for (int u = width - 2; u >= 0; --u) cycle.emplace_back(u, height - 1);
  if (width > 1)
    for (int v = height - 2; v >= 1; --v) cycle.emplace_back(0, v);
  std::vector<ImagePoint> out;
  for (size_t i = 0; i < cycle.size(); i += size_t(stride)) out.push_back(cycle[i]);
  return out;
}

}  // namespace detail

/// Retained scan data for one rendered shadow map, enough to push per-pixel
/// shadow gradients back to per-pixel depth gradients.
struct RenderTape {
  std::vector<RayScan> rays;
  double tau = 0.0;
};

/// One record per sample of a single rendered scan line.
struct ScanSample {
  ImagePoint image_point;
  double alpha = 0.0;
  double depth = 0.0;
  WorldPoint world_point;
  double angle = 0.0;
  double running_max = 0.0;
  double shadow = 0.0;
};

struct ScanLine {
  int light_index = -1;
  std::vector<ScanSample> samples;
};

/// Renders the scan line from the light's image projection to `target`,
/// querying the depth field at the exact sample positions.
inline ScanLine render_line(const DepthField& field, const CameraModel& camera,
                            const LightSource& light, const ImagePoint& target, double tau,
                            int supersample = 1) {
  RayScan scan;
  detail::build_ray_samples(camera, light, target, supersample, scan);
  ScanLine line;
  if (scan.size() == 0) return line;

  const Eigen::VectorXd depths = field.eval_batch(std::span<const ImagePoint>(scan.pos));
  scan.depth.assign(depths.data(), depths.data() + depths.size());
  detail::scan_forward(light.position - camera.center(), tau, scan);

  const Eigen::Vector3d center = camera.center();
  line.samples.resize(scan.size());
  for (size_t i = 0; i < scan.size(); ++i) {
    ScanSample& s = line.samples[i];
    s.image_point = scan.pos[i];
    s.alpha = scan.alpha[i];
    s.depth = scan.depth[i];
    s.world_point = center + scan.depth[i] * scan.dir[i];
    s.angle = scan.angle[i];
    s.running_max = scan.running_max[i];
    s.shadow = scan.shadow[i];
  }
  return line;
}

/// Parameter gradients of sum_i upstream[i] * shadow_i for one rendered line.
inline FieldGradients render_line_param_grads(const DepthField& field, const CameraModel& camera,
                                              const LightSource& light, const ImagePoint& target,
                                              double tau, std::span<const double> upstream,
                                              int supersample = 1) {
  RayScan scan;
  detail::build_ray_samples(camera, light, target, supersample, scan);
  if (upstream.size() != scan.size())
    throw DimensionMismatch("render_line_param_grads: upstream size mismatch");
  FieldGradients g{Eigen::VectorXd::Zero(field.param_count())};
  if (scan.size() == 0) return g;

  DepthField::EvalTape tape;
  const Eigen::VectorXd depths =
      field.eval_batch_with_tape(std::span<const ImagePoint>(scan.pos), tape);
  scan.depth.assign(depths.data(), depths.data() + depths.size());
  detail::scan_forward(light.position - camera.center(), tau, scan);

  std::vector<double> d_depth(scan.size(), 0.0);
  detail::scan_depth_grads(scan, light.position - camera.center(), tau, upstream, d_depth);
  const Eigen::VectorXd dd =
      Eigen::Map<const Eigen::VectorXd>(d_depth.data(), long(d_depth.size()));
  field.backward_into(tape, dd, g.d_params);
  return g;
}

/// Boundary-sampled (R2) shadow map over an explicit depth grid: one scan
/// line per strided boundary pixel, each sample's shadow value averaged into
/// its nearest pixel. Pixels never hit stay uncovered. Rays whose target
/// coincides with the light's projection are skipped.
inline ShadowMap render_shadow_map_r2(const Image<double>& depth, const CameraModel& camera,
                                      const LightSource& light, double tau, int stride = 1,
                                      int supersample = 1, RenderTape* tape = nullptr,
                                      RenderStats* stats = nullptr, int light_index = -1) {
  if (stride < 1) throw InvalidParams("render_shadow_map_r2: stride must be >= 1");
  if (depth.width() != camera.width() || depth.height() != camera.height())
    throw DimensionMismatch("render_shadow_map_r2: depth grid does not match the camera size");

  const Eigen::Vector3d lmc = light.position - camera.center();
  ShadowMap map(depth.width(), depth.height(), light_index);
  Image<double> sum(depth.width(), depth.height(), 0.0);
  if (tape) {
    tape->rays.clear();
    tape->tau = tau;
  }

  for (const ImagePoint& target :
       detail::boundary_targets(depth.width(), depth.height(), stride)) {
    RayScan scan;
    try {
      scan = detail::scan_grid_ray(depth, camera, lmc, light, target, tau, supersample);
    } catch (const DegenerateRay&) {
      continue;  // the nadir pixel is covered by every other ray through it
    }
    if (stats) {
      stats->rays += 1;
      stats->samples += long(scan.size());
    }
    for (size_t i = 0; i < scan.size(); ++i) {
      sum[size_t(scan.pixel[i])] += scan.shadow[i];
      map.coverage[size_t(scan.pixel[i])] += 1;
    }
    if (tape) tape->rays.push_back(std::move(scan));
  }

  for (size_t i = 0; i < map.values.size(); ++i)
    if (map.coverage[i] > 0) map.values[i] = sum[i] / double(map.coverage[i]);
  return map;
}

/// Same render driven by a depth field: the field is evaluated once on the
/// pixel lattice and scan samples interpolate between pixel centers.
inline ShadowMap render_shadow_map_r2(const DepthField& field, const CameraModel& camera,
                                      const LightSource& light, double tau, int stride = 1,
                                      int supersample = 1, int light_index = -1) {
  DepthField::EvalTape tape;
  const Eigen::VectorXd d = field.eval_grid_with_tape(tape);
  Image<double> grid(camera.width(), camera.height());
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = d[long(i)];
  return render_shadow_map_r2(grid, camera, light, tau, stride, supersample, nullptr, nullptr,
                              light_index);
}

/// Backward for render_shadow_map_r2: per-pixel shadow-map gradients
/// (d loss / d S_hat) flow back to per-pixel depth gradients. Rays are
/// replayed in render order so accumulation is deterministic.
inline void render_shadow_map_r2_backward(const RenderTape& tape, const CameraModel& camera,
                                          const LightSource& light, const ShadowMap& map,
                                          const Image<double>& d_values, Image<double>& d_depth) {
  const Eigen::Vector3d lmc = light.position - camera.center();
  std::vector<double> upstream, d_sample;
  for (const RayScan& scan : tape.rays) {
    upstream.resize(scan.size());
    for (size_t i = 0; i < scan.size(); ++i) {
      const size_t pix = size_t(scan.pixel[i]);
      upstream[i] = d_values[pix] / double(map.coverage[pix]);
    }
    d_sample.assign(scan.size(), 0.0);
    detail::scan_depth_grads(scan, lmc, tape.tau, upstream, d_sample);
    detail::scatter_depth_grads(scan, d_sample, d_depth);
  }
}

/// Exact all-pixels (R3) visibility oracle over a ground-truth depth grid:
/// for every pixel, walk the ray from the light's projection, bilinearly
/// sampling the height map, and apply the hard running-max test. Binary
/// output, no sigmoid, not differentiable.
inline ShadowMap render_shadow_map_r3_oracle(const Image<double>& height_map,
                                             const CameraModel& camera, const LightSource& light,
                                             RenderStats* stats = nullptr, int light_index = -1) {
  if (height_map.width() != camera.width() || height_map.height() != camera.height())
    throw DimensionMismatch("render_shadow_map_r3_oracle: grid does not match the camera size");
  const int W = height_map.width(), H = height_map.height();
  const Eigen::Vector3d center = camera.center();
  const Eigen::Vector3d L = light.position;

  ShadowMap map(W, H, light_index);
  map.coverage.fill(1);
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      ImageRay ray;
      try {
        ray = image_ray(light, ImagePoint(double(u), double(v)), W, H);
      } catch (const DegenerateRay&) {
        map.values(u, v) = 1.0;  // pixel under the light
        continue;
      }
      if (stats) {
        stats->rays += 1;
        stats->samples += long(ray.points.size());
      }
      if (ray.points.empty()) {
        map.values(u, v) = 1.0;
        continue;
      }
      auto world = [&](const ImagePoint& p) -> Eigen::Vector3d {
        return center +
               detail::bilinear(height_map, p.x(), p.y()) * camera.unproject_dir(p);
      };
      const Eigen::Vector3d v0 = L - world(ray.points[0]);
      const double n0 = v0.norm();
      double horizon = 0.0;
      double ang = 0.0;
      for (size_t i = 1; i < ray.points.size(); ++i) {
        const Eigen::Vector3d vi = L - world(ray.points[i]);
        const double c = v0.dot(vi) / (n0 * vi.norm() + kAngleEps);
        ang = std::acos(std::clamp(c, -kCosineClamp, kCosineClamp));
        if (i + 1 < ray.points.size()) horizon = std::max(horizon, ang);
      }
      map.values(u, v) = (ray.points.size() == 1 || ang >= horizon) ? 1.0 : 0.0;
    }
  }
  return map;
}

}  // namespace shadowfit
