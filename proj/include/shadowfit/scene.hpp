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

#include <utility>
#include <vector>

#include "shadowfit/geometry.hpp"
#include "shadowfit/image.hpp"
#include "shadowfit/shadow_renderer.hpp"

namespace shadowfit {

/// Everything the optimizer consumes: one camera, N lights, the ground-truth
/// shadow map per light, and the pixelwise mean of those maps (the edge signal
/// for the depth regularizer; with shadow-only input the shadow boundaries are
/// the only available image edges).
class Scene {
 public:
  Scene(CameraModel camera, std::vector<LightSource> lights, std::vector<ShadowMap> truth,
        double depth_offset = 0.0, double depth_scale = 1.0)
      : camera_(std::move(camera)),
        lights_(std::move(lights)),
        truth_(std::move(truth)),
        depth_offset_(depth_offset),
        depth_scale_(depth_scale) {
    if (lights_.empty()) throw BadConfig("scene: requires at least one light");
    if (truth_.size() != lights_.size())
      throw BadConfig("scene: shadow map count does not match light count");
    for (const ShadowMap& m : truth_)
      if (m.values.width() != camera_.width() || m.values.height() != camera_.height())
        throw SizeMismatch("scene: shadow map size does not match the camera image size");
    mean_image_ = Image<double>(camera_.width(), camera_.height(), 0.0);
    for (const ShadowMap& m : truth_)
      for (size_t i = 0; i < mean_image_.size(); ++i) mean_image_[i] += m.values[i];
    for (size_t i = 0; i < mean_image_.size(); ++i) mean_image_[i] /= double(truth_.size());
  }

  const CameraModel& camera() const { return camera_; }
  const std::vector<LightSource>& lights() const { return lights_; }
  const std::vector<ShadowMap>& truth() const { return truth_; }
  const Image<double>& mean_image() const { return mean_image_; }
  int n_lights() const { return int(lights_.size()); }

  /// Output-transform hints for depth fields fitted to this scene.
  double depth_offset() const { return depth_offset_; }
  double depth_scale() const { return depth_scale_; }

 private:
  CameraModel camera_;
  std::vector<LightSource> lights_;
  std::vector<ShadowMap> truth_;
  Image<double> mean_image_;
  double depth_offset_;
  double depth_scale_;
};

}  // namespace shadowfit
