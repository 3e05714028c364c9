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

#include <cassert>
#include <cstddef>
#include <vector>

#include "shadowfit/errors.hpp"

namespace shadowfit {

/// Row-major H x W grid. Row 0 is the top image row, pixel centers sit at
/// integer coordinates (u, v) with u along the width.
template <class T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(size_t(width) * height, fill) {
    if (width <= 0 || height <= 0) throw InvalidParams("Image: dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int u, int v) {
    assert(in_bounds(u, v));
    return data_[size_t(v) * width_ + u];
  }
  const T& operator()(int u, int v) const {
    assert(in_bounds(u, v));
    return data_[size_t(v) * width_ + u];
  }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  bool in_bounds(int u, int v) const { return u >= 0 && u < width_ && v >= 0 && v < height_; }
  bool same_size(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  void fill(T value) { data_.assign(data_.size(), value); }

  bool operator==(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ && data_ == other.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Quantizes a double to the nearest float32 value. The volatile hop keeps
/// the conversion pair from being elided when initializer lists and loops
/// get vectorized.
inline double snap_to_float(double x) {
  volatile float f = float(x);
  return double(f);
}

inline void require_same_size(const Image<double>& a, const Image<double>& b, const char* what) {
  if (!a.same_size(b))
    throw DimensionMismatch(std::string(what) + ": grids differ in size (" +
                            std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                            std::to_string(b.width()) + "x" + std::to_string(b.height()) + ")");
}

}  // namespace shadowfit
