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
#include <string>
#include <vector>

#include "shadowfit/errors.hpp"

namespace shadowfit {

using ImagePoint = Eigen::Vector2d;
using WorldPoint = Eigen::Vector3d;

/// Pinhole camera, right-handed, z forward, origin at the camera center.
/// Projection is u = K [R|t] X followed by the perspective divide; depth means
/// camera-frame z throughout.
class CameraModel {
 public:
  CameraModel(const Eigen::Matrix3d& intrinsics, int width, int height,
              const Eigen::Matrix3d& rotation = Eigen::Matrix3d::Identity(),
              const Eigen::Vector3d& translation = Eigen::Vector3d::Zero())
      : K_(intrinsics), R_(rotation), t_(translation), width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw InvalidParams("CameraModel: image size must be positive");
    if (K_(0, 0) <= 0 || K_(1, 1) <= 0 || K_(2, 2) != 1.0 || K_(1, 0) != 0.0 || K_(2, 0) != 0.0 ||
        K_(2, 1) != 0.0)
      throw InvalidParams("CameraModel: K must be upper-triangular with positive focals and K22=1");
    if ((R_.transpose() * R_ - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      throw InvalidParams("CameraModel: rotation is not orthonormal");
    K_inv_ = K_.inverse();
  }

  /// Convenience pinhole constructor.
  static CameraModel pinhole(double fx, double fy, double cx, double cy, int width, int height) {
    Eigen::Matrix3d K;
    K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return CameraModel(K, width, height);
  }

  const Eigen::Matrix3d& intrinsics() const { return K_; }
  const Eigen::Matrix3d& rotation() const { return R_; }
  const Eigen::Vector3d& translation() const { return t_; }
  int width() const { return width_; }
  int height() const { return height_; }

  /// Camera center in world coordinates.
  Eigen::Vector3d center() const { return -R_.transpose() * t_; }

  /// Camera-frame z of a world point.
  double depth_of(const WorldPoint& p) const { return (R_ * p + t_).z(); }

  ImagePoint project(const WorldPoint& p) const {
    const Eigen::Vector3d pc = R_ * p + t_;
    if (pc.z() <= 0.0)
      throw NonPositiveDepth("project: point has non-positive depth in the camera frame");
    const Eigen::Vector3d h = K_ * pc;
    return ImagePoint(h.x() / h.z(), h.y() / h.z());
  }

  WorldPoint unproject(const ImagePoint& u, double depth) const {
    if (depth <= 0.0) throw NonPositiveDepth("unproject: depth must be positive");
    const Eigen::Vector3d pc = depth * (K_inv_ * Eigen::Vector3d(u.x(), u.y(), 1.0));
    return R_.transpose() * (pc - t_);
  }

  /// Direction d such that unproject(u, depth) = center() + depth * d.
  Eigen::Vector3d unproject_dir(const ImagePoint& u) const {
    return R_.transpose() * (K_inv_ * Eigen::Vector3d(u.x(), u.y(), 1.0));
  }

  bool in_frame(const ImagePoint& u) const {
    return u.x() >= 0.0 && u.x() <= width_ - 1.0 && u.y() >= 0.0 && u.y() <= height_ - 1.0;
  }

 private:
  Eigen::Matrix3d K_;
  Eigen::Matrix3d R_;
  Eigen::Vector3d t_;
  Eigen::Matrix3d K_inv_;
  int width_ = 0;
  int height_ = 0;
};

/// Point light with its image-plane projection. Directional lights are point
/// lights pushed far away along the stated direction.
struct LightSource {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  ImagePoint image_projection = ImagePoint::Zero();
  bool is_directional = false;
};

/// A directional light becomes a point light at this multiple of the
/// camera-to-anchor distance along the stated direction. Steeper directions
/// would land behind the camera, where the projection is undefined.
inline constexpr double kDirectionalDistanceFactor = 2.0;

inline LightSource make_point_light(const CameraModel& camera, const Eigen::Vector3d& position) {
  if (camera.depth_of(position) <= 0.0)
    throw BadConfig("light: position has non-positive depth in the camera frame, cannot project");
  return LightSource{position, camera.project(position), false};
}

/// `towards` points from the scene toward the light; `anchor` is the scene
/// point the pseudo-position is measured from.
inline LightSource make_directional_light(const CameraModel& camera,
                                          const Eigen::Vector3d& towards,
                                          const Eigen::Vector3d& anchor) {
  if (towards.norm() == 0.0) throw BadConfig("light: direction must be non-zero");
  const double distance = kDirectionalDistanceFactor * (anchor - camera.center()).norm();
  const Eigen::Vector3d pos = anchor + distance * towards.normalized();
  if (camera.depth_of(pos) <= 0.0)
    throw BadConfig(
        "light: directional pseudo-position falls behind the camera; the direction is too steep "
        "for the single-view projection");
  return LightSource{pos, camera.project(pos), true};
}

/// Discrete samples of the image-plane segment from a light's projection to a
/// target pixel, ordered by increasing alpha.
struct ImageRay {
  std::vector<ImagePoint> points;
  std::vector<double> alphas;
};

namespace detail {

/// Clips the parametric segment p(a) = origin + a * delta, a in [0,1], to the
/// pixel-center rectangle [0, W-1] x [0, H-1]. Returns false if no overlap.
inline bool clip_alpha_range(const ImagePoint& origin, const ImagePoint& delta, int width,
                             int height, double& a_lo, double& a_hi) {
  a_lo = 0.0;
  a_hi = 1.0;
  const double lo[2] = {0.0, 0.0};
  const double hi[2] = {double(width - 1), double(height - 1)};
  for (int axis = 0; axis < 2; ++axis) {
    const double o = origin[axis];
    const double d = delta[axis];
    if (d == 0.0) {
      if (o < lo[axis] || o > hi[axis]) return false;
      continue;
    }
    double t0 = (lo[axis] - o) / d;
    double t1 = (hi[axis] - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    a_lo = std::max(a_lo, t0);
    a_hi = std::min(a_hi, t1);
    if (a_lo > a_hi) return false;
  }
  return true;
}

}  // namespace detail

/// Samples the segment from the light's image projection to `target`, one
/// sample per pixel step along the dominant axis (times `supersample`).
/// Samples outside the image rectangle are excluded.
inline ImageRay image_ray(const LightSource& light, const ImagePoint& target, int width,
                          int height, int supersample = 1) {
  if (supersample < 1) throw InvalidParams("image_ray: supersample must be >= 1");
  const ImagePoint ell = light.image_projection;
  const ImagePoint delta = target - ell;
  if (delta.norm() < 0.5)
    throw DegenerateRay("image_ray: light projection coincides with target within 0.5 px");
  const double span = std::max(std::abs(delta.x()), std::abs(delta.y()));

  const long n = std::max<long>(1, long(std::ceil(span)) * supersample);
  double a_lo, a_hi;
  ImageRay ray;
  if (!detail::clip_alpha_range(ell, delta, width, height, a_lo, a_hi)) return ray;

  // Index range covering [a_lo, a_hi]; the epsilon absorbs clip round-off so
  // the endpoints are not dropped.
  long i_lo = long(std::ceil(a_lo * double(n) - 1e-9));
  long i_hi = long(std::floor(a_hi * double(n) + 1e-9));
  i_lo = std::max<long>(i_lo, 0);
  i_hi = std::min<long>(i_hi, n);
  const double tol = 1e-7;
  ray.points.reserve(size_t(std::max<long>(0, i_hi - i_lo + 1)));
  for (long i = i_lo; i <= i_hi; ++i) {
    const double a = double(i) / double(n);
    ImagePoint p = (i == n) ? target : ImagePoint(ell + a * delta);
    if (p.x() < -tol || p.x() > width - 1.0 + tol || p.y() < -tol || p.y() > height - 1.0 + tol)
      continue;
    p.x() = std::clamp(p.x(), 0.0, double(width - 1));
    p.y() = std::clamp(p.y(), 0.0, double(height - 1));
    ray.points.push_back(p);
    ray.alphas.push_back(a);
  }
  return ray;
}

}  // namespace shadowfit
