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

#include <cmath>
#include <string>
#include <vector>

#include "shadowfit/geometry.hpp"
#include "shadowfit/image.hpp"
#include "shadowfit/random.hpp"
#include "shadowfit/scene.hpp"
#include "shadowfit/shadow_renderer.hpp"

namespace shadowfit {

enum class TerrainKind { plane, step, pillar, gaussian_bumps, ridge };

inline TerrainKind terrain_kind_from_string(const std::string& name) {
  if (name == "plane") return TerrainKind::plane;
  if (name == "step") return TerrainKind::step;
  if (name == "pillar") return TerrainKind::pillar;
  if (name == "gaussian_bumps") return TerrainKind::gaussian_bumps;
  if (name == "ridge") return TerrainKind::ridge;
  throw InvalidParams("terrain: unknown kind '" + name + "'");
}

struct TerrainParams {
  int width = 64;
  int height = 64;
  double base_depth = 3.0;   // depth of the ground plane, world units
  double amplitude = 0.35;   // feature height toward the camera
  int features = 2;          // bump count (gaussian_bumps)
  double feature_scale = 0.16;  // feature footprint as a fraction of min(W, H)
  int column = -1;           // step column, defaults to W/2
  double pillar_frac = 0.2;  // pillar half-width as a fraction of min(W, H)
};

/// Analytic depth grids (depth = base - height, features rise toward the
/// camera). Values are snapped to float32 so baked scenes survive the on-disk
/// round trip bit-for-bit.
inline Image<double> make_terrain(TerrainKind kind, const TerrainParams& p, uint64_t seed) {
  if (p.width <= 1 || p.height <= 1) throw InvalidParams("terrain: grid must be at least 2x2");
  if (p.amplitude < 0.0 || p.base_depth <= p.amplitude)
    throw InvalidParams("terrain: need 0 <= amplitude < base_depth to keep depths positive");
  Image<double> depth(p.width, p.height, p.base_depth);
  const double scale_px = p.feature_scale * std::min(p.width, p.height);
  Rng rng(seed);

  auto set_height = [&](int u, int v, double h) { depth(u, v) = p.base_depth - h; };

  switch (kind) {
    case TerrainKind::plane:
      break;
    case TerrainKind::step: {
      const int c = p.column >= 0 ? p.column : p.width / 2;
      if (c < 0 || c >= p.width) throw InvalidParams("terrain: step column out of range");
      for (int v = 0; v < p.height; ++v)
        for (int u = c; u < p.width; ++u) set_height(u, v, p.amplitude);
      break;
    }
    case TerrainKind::pillar: {
      const double half = p.pillar_frac * std::min(p.width, p.height) * 0.5;
      const double cu = (p.width - 1) / 2.0, cv = (p.height - 1) / 2.0;
      for (int v = 0; v < p.height; ++v)
        for (int u = 0; u < p.width; ++u)
          if (std::abs(u - cu) <= half && std::abs(v - cv) <= half)
            set_height(u, v, p.amplitude);
      break;
    }
    case TerrainKind::gaussian_bumps: {
      if (p.features < 1) throw InvalidParams("terrain: gaussian_bumps needs features >= 1");
      struct Bump {
        double cu, cv, sigma, amp;
      };
      std::vector<Bump> bumps;
      for (int k = 0; k < p.features; ++k) {
        Bump b;
        b.cu = rng.uniform(0.2, 0.8) * (p.width - 1);
        b.cv = rng.uniform(0.2, 0.8) * (p.height - 1);
        b.sigma = scale_px * rng.uniform(0.7, 1.3);
        b.amp = p.amplitude * rng.uniform(0.6, 1.0);
        bumps.push_back(b);
      }
      for (int v = 0; v < p.height; ++v)
        for (int u = 0; u < p.width; ++u) {
          double h = 0.0;
          for (const Bump& b : bumps) {
            const double du = (u - b.cu) / b.sigma, dv = (v - b.cv) / b.sigma;
            h += b.amp * std::exp(-0.5 * (du * du + dv * dv));
          }
          set_height(u, v, std::min(h, p.base_depth * 0.9));
        }
      break;
    }
    case TerrainKind::ridge: {
      const double theta = rng.uniform(0.0, M_PI);
      const double nx = -std::sin(theta), ny = std::cos(theta);
      const double cu = (p.width - 1) / 2.0, cv = (p.height - 1) / 2.0;
      for (int v = 0; v < p.height; ++v)
        for (int u = 0; u < p.width; ++u) {
          const double d = (u - cu) * nx + (v - cv) * ny;
          set_height(u, v, p.amplitude * std::exp(-0.5 * (d / scale_px) * (d / scale_px)));
        }
      break;
    }
  }
  for (size_t i = 0; i < depth.size(); ++i) depth[i] = snap_to_float(depth[i]);
  return depth;
}

enum class LightPattern { ring, dome, random };

inline LightPattern light_pattern_from_string(const std::string& name) {
  if (name == "ring") return LightPattern::ring;
  if (name == "dome") return LightPattern::dome;
  if (name == "random") return LightPattern::random;
  throw InvalidParams("light rig: unknown pattern '" + name + "'");
}

/// Point-light rigs around `center` (the scene midpoint on the optical axis).
/// "Up" is toward the camera, so a light at height h sits at center.z - h.
/// ring: n lights uniformly spaced in azimuth on a circle of the given radius
/// at the given height. dome: n lights on a spherical cap of radius
/// hypot(radius, height), Fibonacci-spaced. random: seeded uniform azimuth and
/// elevation at fixed distance hypot(radius, height).
inline std::vector<LightSource> make_light_rig(const CameraModel& camera, int n, double radius,
                                               double height, LightPattern pattern, uint64_t seed,
                                               const Eigen::Vector3d& center) {
  if (n < 1) throw InvalidParams("light rig: need at least one light");
  if (radius < 0.0 || height < 0.0 || (radius == 0.0 && height == 0.0))
    throw InvalidParams("light rig: radius/height must be non-negative and not both zero");
  std::vector<Eigen::Vector3d> positions;
  Rng rng(seed);
  const double rho = std::hypot(radius, height);
  switch (pattern) {
    case LightPattern::ring:
      for (int i = 0; i < n; ++i) {
        const double phi = 2.0 * M_PI * double(i) / double(n);
        positions.push_back(center + Eigen::Vector3d(radius * std::cos(phi),
                                                     radius * std::sin(phi), -height));
      }
      break;
    case LightPattern::dome: {
      const double golden = M_PI * (3.0 - std::sqrt(5.0));
      const double s_lo = std::sin(20.0 * M_PI / 180.0), s_hi = std::sin(85.0 * M_PI / 180.0);
      for (int i = 0; i < n; ++i) {
        const double s = s_lo + (s_hi - s_lo) * (double(i) + 0.5) / double(n);
        const double elev = std::asin(s);
        const double phi = golden * double(i);
        positions.push_back(center + rho * Eigen::Vector3d(std::cos(elev) * std::cos(phi),
                                                           std::cos(elev) * std::sin(phi),
                                                           -std::sin(elev)));
      }
      break;
    }
    case LightPattern::random: {
      const double s_lo = std::sin(25.0 * M_PI / 180.0), s_hi = std::sin(80.0 * M_PI / 180.0);
      for (int i = 0; i < n; ++i) {
        const double elev = std::asin(rng.uniform(s_lo, s_hi));
        const double phi = rng.uniform(0.0, 2.0 * M_PI);
        positions.push_back(center + rho * Eigen::Vector3d(std::cos(elev) * std::cos(phi),
                                                           std::cos(elev) * std::sin(phi),
                                                           -std::sin(elev)));
      }
      break;
    }
  }
  std::vector<LightSource> lights;
  for (const Eigen::Vector3d& pos : positions) {
    if (camera.depth_of(pos) <= 0.0)
      throw InvalidParams("light rig: a light falls behind the camera; lower the height");
    lights.push_back(make_point_light(camera, pos));
  }
  return lights;
}

/// Ring rig given an elevation angle instead of radius/height.
inline std::vector<LightSource> make_ring_rig_at_elevation(const CameraModel& camera, int n,
                                                           double distance, double elevation_deg,
                                                           const Eigen::Vector3d& center) {
  const double e = elevation_deg * M_PI / 180.0;
  return make_light_rig(camera, n, distance * std::cos(e), distance * std::sin(e),
                        LightPattern::ring, 0, center);
}

/// Ground-truth scene: analytic depth grid, light rig, and one exact binary
/// shadow map per light from the all-pixels oracle.
struct SyntheticScene {
  Image<double> height_map;  // per-pixel depth, world units
  CameraModel camera;
  std::vector<LightSource> lights;
  std::vector<ShadowMap> shadow_maps;
  uint64_t seed = 0;
};

inline SyntheticScene bake_scene(Image<double> height_map, CameraModel camera,
                                 std::vector<LightSource> lights, uint64_t seed = 0) {
  if (height_map.width() != camera.width() || height_map.height() != camera.height())
    throw SizeMismatch("bake_scene: height map does not match the camera image size");
  if (lights.empty()) throw InvalidParams("bake_scene: needs at least one light");
  SyntheticScene scene{std::move(height_map), std::move(camera), std::move(lights), {}, seed};
  for (size_t j = 0; j < scene.lights.size(); ++j)
    scene.shadow_maps.push_back(
        render_shadow_map_r3_oracle(scene.height_map, scene.camera, scene.lights[j], nullptr,
                                    int(j)));
  return scene;
}

/// Transform hints that start a fitted field near the scene's depth range.
inline std::pair<double, double> depth_transform_hints(const Image<double>& height_map) {
  double lo = height_map[0], hi = height_map[0];
  for (size_t i = 0; i < height_map.size(); ++i) {
    lo = std::min(lo, height_map[i]);
    hi = std::max(hi, height_map[i]);
  }
  const double mid = 0.5 * (lo + hi);
  const double offset = std::max(0.0, mid - std::log(2.0));  // softplus(0) = log 2
  return {offset, 1.0};
}

inline Scene to_scene(const SyntheticScene& s) {
  const auto [offset, scale] = depth_transform_hints(s.height_map);
  return Scene(s.camera, s.lights, s.shadow_maps, offset, scale);
}

/// Camera whose frustum spans [-extent/2, extent/2] at the given depth.
inline CameraModel make_scene_camera(int width, int height, double extent, double depth) {
  const double f = double(width) * depth / extent;
  return CameraModel::pinhole(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height);
}

}  // namespace shadowfit
