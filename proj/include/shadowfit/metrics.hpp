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
#include <cstdint>
#include <utility>

#include "shadowfit/errors.hpp"
#include "shadowfit/geometry.hpp"
#include "shadowfit/image.hpp"

namespace shadowfit {

using NormalMap = Image<Eigen::Vector3d>;

/// Per-pixel surface normals from a dense depth grid: central differences of
/// the unprojected world points (one-sided at the borders), normal = the
/// normalized cross product, oriented toward the camera (n_z < 0 under the
/// z-forward convention).
inline NormalMap normals_from_depth(const Image<double>& depth, const CameraModel& camera) {
  if (depth.width() != camera.width() || depth.height() != camera.height())
    throw DimensionMismatch("normals_from_depth: depth grid does not match the camera size");
  const int W = depth.width(), H = depth.height();
  NormalMap normals(W, H, Eigen::Vector3d(0, 0, -1));
  auto world = [&](int u, int v) {
    return camera.unproject(ImagePoint(double(u), double(v)), depth(u, v));
  };
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const int u0 = std::max(u - 1, 0), u1 = std::min(u + 1, W - 1);
      const int v0 = std::max(v - 1, 0), v1 = std::min(v + 1, H - 1);
      const Eigen::Vector3d tu = world(u1, v) - world(u0, v);
      const Eigen::Vector3d tv = world(u, v1) - world(u, v0);
      Eigen::Vector3d n = tu.cross(tv);
      const double len = n.norm();
      if (len == 0.0) {
        normals(u, v) = Eigen::Vector3d(0, 0, -1);
        continue;
      }
      n /= len;
      if (n.z() > 0.0) n = -n;
      normals(u, v) = n;
    }
  }
  return normals;
}

/// Normalized mean depth error: mean absolute difference of the two z-scored
/// maps, invariant to per-map scale and bias.
inline double nmze(const Image<double>& pred, const Image<double>& truth) {
  require_same_size(pred, truth, "nmze");
  const auto zscore = [](const Image<double>& m, bool is_truth) {
    double mean = 0.0;
    for (size_t i = 0; i < m.size(); ++i) mean += m[i];
    mean /= double(m.size());
    double var = 0.0;
    for (size_t i = 0; i < m.size(); ++i) var += (m[i] - mean) * (m[i] - mean);
    var /= double(m.size());
    const double sd = std::sqrt(var);
    if (sd == 0.0) {
      if (is_truth) throw ConstantTruth("nmze: truth depth map is constant");
      return std::pair<double, double>{mean, 1.0};
    }
    return std::pair<double, double>{mean, sd};
  };
  const auto [mt, st] = zscore(truth, true);
  const auto [mp, sp] = zscore(pred, false);
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i)
    sum += std::abs((pred[i] - mp) / sp - (truth[i] - mt) / st);
  return sum / double(pred.size());
}

/// Mean angular error between unit normal maps, in degrees, over the mask.
inline double normal_mae(const NormalMap& pred, const NormalMap& truth,
                         const Image<uint8_t>* mask = nullptr) {
  if (pred.width() != truth.width() || pred.height() != truth.height())
    throw DimensionMismatch("normal_mae: normal maps differ in size");
  if (mask && (mask->width() != pred.width() || mask->height() != pred.height()))
    throw DimensionMismatch("normal_mae: mask size differs from the normal maps");
  double sum = 0.0;
  long count = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (mask && (*mask)[i] == 0) continue;
    const double d = std::clamp(pred[i].dot(truth[i]), -1.0, 1.0);
    sum += std::acos(d) * 180.0 / M_PI;
    ++count;
  }
  if (count == 0) throw EmptyMask("normal_mae: mask selects no pixels");
  return sum / double(count);
}

}  // namespace shadowfit
