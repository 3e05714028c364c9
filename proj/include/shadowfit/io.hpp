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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shadowfit/errors.hpp"
#include "shadowfit/geometry.hpp"
#include "shadowfit/image.hpp"
#include "shadowfit/metrics.hpp"
#include "shadowfit/scene.hpp"
#include "shadowfit/synthetic.hpp"

namespace shadowfit {

/// On-disk shadow polarity. Internally 1 always means illuminated; the flag
/// only controls how bytes map to that convention.
enum class Polarity { white_lit, white_shadow };

inline Polarity polarity_from_string(const std::string& name) {
  if (name == "white_lit") return Polarity::white_lit;
  if (name == "white_shadow") return Polarity::white_shadow;
  throw BadConfig("polarity: expected 'white_lit' or 'white_shadow', got '" + name + "'");
}

inline std::string to_string(Polarity p) {
  return p == Polarity::white_lit ? "white_lit" : "white_shadow";
}

namespace detail {

inline std::ifstream open_input(const std::string& path, bool binary = true) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) throw MissingFile("cannot open file: " + path);
  return f;
}

inline std::ofstream open_output(const std::string& path, bool binary = true) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw MissingFile("cannot create file: " + path);
  return f;
}

inline void skip_pnm_whitespace(std::istream& is) {
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      return;
    }
  }
}

}  // namespace detail

/// 8-bit binary PGM (P5, maxval 255), row 0 on top.
inline void write_pgm(const std::string& path, const Image<uint8_t>& image) {
  auto f = detail::open_output(path);
  f << "P5\n" << image.width() << " " << image.height() << "\n255\n";
  f.write(reinterpret_cast<const char*>(image.data().data()), long(image.size()));
}

inline Image<uint8_t> read_pgm(const std::string& path) {
  auto f = detail::open_input(path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw BadConfig("pgm: '" + path + "' is not a binary P5 file");
  detail::skip_pnm_whitespace(f);
  int width = 0, height = 0, maxval = 0;
  f >> width;
  detail::skip_pnm_whitespace(f);
  f >> height;
  detail::skip_pnm_whitespace(f);
  f >> maxval;
  if (!f || width <= 0 || height <= 0) throw BadConfig("pgm: bad header in " + path);
  if (maxval != 255) throw BadConfig("pgm: only maxval 255 is supported: " + path);
  f.get();  // single whitespace after maxval
  Image<uint8_t> image(width, height);
  f.read(reinterpret_cast<char*>(image.data().data()), long(image.size()));
  if (!f) throw BadConfig("pgm: truncated pixel data in " + path);
  return image;
}

/// Shadow map -> bytes under the given polarity. Soft values round; uncovered
/// pixels write as shadowed.
inline void write_shadow_pgm(const std::string& path, const ShadowMap& map, Polarity polarity) {
  Image<uint8_t> bytes(map.values.width(), map.values.height());
  for (size_t i = 0; i < bytes.size(); ++i) {
    const double lit = std::clamp(map.values[i], 0.0, 1.0);
    const double v = polarity == Polarity::white_lit ? lit : 1.0 - lit;
    bytes[i] = uint8_t(std::lround(v * 255.0));
  }
  write_pgm(path, bytes);
}

/// Bytes -> binary shadow map: threshold 0.5 of the 8-bit range, honoring the
/// polarity flag. Full coverage.
inline ShadowMap read_shadow_pgm(const std::string& path, Polarity polarity,
                                 int light_index = -1) {
  const Image<uint8_t> bytes = read_pgm(path);
  ShadowMap map(bytes.width(), bytes.height(), light_index);
  map.coverage.fill(1);
  for (size_t i = 0; i < bytes.size(); ++i) {
    const bool white = bytes[i] >= 128;
    map.values[i] = (white == (polarity == Polarity::white_lit)) ? 1.0 : 0.0;
  }
  return map;
}

// PFM float maps, little-endian (negative scale), rows bottom-to-top per the
// format convention. Grayscale "Pf" for depth, RGB "PF" for normals.

inline void write_pfm(const std::string& path, const Image<double>& image) {
  auto f = detail::open_output(path);
  f << "Pf\n" << image.width() << " " << image.height() << "\n-1.0\n";
  std::vector<float> row(static_cast<size_t>(image.width()));
  for (int v = image.height() - 1; v >= 0; --v) {
    for (int u = 0; u < image.width(); ++u) row[size_t(u)] = float(image(u, v));
    f.write(reinterpret_cast<const char*>(row.data()), long(row.size() * sizeof(float)));
  }
}

inline Image<double> read_pfm(const std::string& path) {
  auto f = detail::open_input(path);
  std::string magic;
  f >> magic;
  if (magic != "Pf") throw BadConfig("pfm: '" + path + "' is not a grayscale Pf file");
  int width = 0, height = 0;
  double scale = 0.0;
  f >> width >> height >> scale;
  if (!f || width <= 0 || height <= 0) throw BadConfig("pfm: bad header in " + path);
  if (scale >= 0.0) throw BadConfig("pfm: big-endian data is not supported: " + path);
  f.get();
  Image<double> image(width, height);
  std::vector<float> row(static_cast<size_t>(width));
  for (int v = height - 1; v >= 0; --v) {
    f.read(reinterpret_cast<char*>(row.data()), long(row.size() * sizeof(float)));
    for (int u = 0; u < width; ++u) image(u, v) = double(row[size_t(u)]);
  }
  if (!f) throw BadConfig("pfm: truncated pixel data in " + path);
  return image;
}

inline void write_pfm_normals(const std::string& path, const NormalMap& normals) {
  auto f = detail::open_output(path);
  f << "PF\n" << normals.width() << " " << normals.height() << "\n-1.0\n";
  std::vector<float> row(size_t(normals.width()) * 3);
  for (int v = normals.height() - 1; v >= 0; --v) {
    for (int u = 0; u < normals.width(); ++u) {
      row[size_t(u) * 3 + 0] = float(normals(u, v).x());
      row[size_t(u) * 3 + 1] = float(normals(u, v).y());
      row[size_t(u) * 3 + 2] = float(normals(u, v).z());
    }
    f.write(reinterpret_cast<const char*>(row.data()), long(row.size() * sizeof(float)));
  }
}

inline NormalMap read_pfm_normals(const std::string& path) {
  auto f = detail::open_input(path);
  std::string magic;
  f >> magic;
  if (magic != "PF") throw BadConfig("pfm: '" + path + "' is not an RGB PF file");
  int width = 0, height = 0;
  double scale = 0.0;
  f >> width >> height >> scale;
  if (!f || width <= 0 || height <= 0) throw BadConfig("pfm: bad header in " + path);
  if (scale >= 0.0) throw BadConfig("pfm: big-endian data is not supported: " + path);
  f.get();
  NormalMap normals(width, height);
  std::vector<float> row(size_t(width) * 3);
  for (int v = height - 1; v >= 0; --v) {
    f.read(reinterpret_cast<char*>(row.data()), long(row.size() * sizeof(float)));
    for (int u = 0; u < width; ++u)
      normals(u, v) = Eigen::Vector3d(row[size_t(u) * 3], row[size_t(u) * 3 + 1],
                                      row[size_t(u) * 3 + 2]);
  }
  if (!f) throw BadConfig("pfm: truncated pixel data in " + path);
  return normals;
}

/// A parsed scene plus the paths recorded in its config.
struct LoadedScene {
  Scene scene;
  Polarity polarity = Polarity::white_lit;
  std::optional<std::string> ground_truth_depth;  // absolute path if present
};

/// Scene config schema (JSON): camera {fx,fy,cx,cy,width,height}, lights
/// (position or direction per entry), shadow_maps (paths relative to the
/// config file), polarity, depth {offset, scale}, optional ground_truth_depth.
inline LoadedScene load_scene(const std::string& config_path,
                              std::optional<Polarity> polarity_override = std::nullopt) {
  namespace fs = std::filesystem;
  if (!fs::exists(config_path)) throw MissingFile("scene config not found: " + config_path);
  nlohmann::json j;
  try {
    auto f = detail::open_input(config_path, false);
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw BadConfig("scene config: JSON parse error in " + config_path + ": " + e.what());
  }
  const fs::path base = fs::path(config_path).parent_path();

  if (!j.contains("camera")) throw BadConfig("scene config: missing 'camera'");
  const auto& jc = j["camera"];
  for (const char* key : {"fx", "fy", "cx", "cy", "width", "height"})
    if (!jc.contains(key)) throw BadConfig(std::string("scene config: camera missing '") + key + "'");
  CameraModel camera = [&] {
    try {
      return CameraModel::pinhole(jc["fx"].get<double>(), jc["fy"].get<double>(),
                                  jc["cx"].get<double>(), jc["cy"].get<double>(),
                                  jc["width"].get<int>(), jc["height"].get<int>());
    } catch (const InvalidParams& e) {
      throw BadConfig(std::string("scene config: camera: ") + e.what());
    }
  }();

  if (!j.contains("lights") || !j["lights"].is_array() || j["lights"].empty())
    throw BadConfig("scene config: 'lights' must be a non-empty array");
  Eigen::Vector3d anchor(0, 0, 1);
  if (j.contains("scene_center") && j["scene_center"].is_array()) {
    const auto& a = j["scene_center"];
    anchor = Eigen::Vector3d(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  }
  std::vector<LightSource> lights;
  for (size_t i = 0; i < j["lights"].size(); ++i) {
    const auto& jl = j["lights"][i];
    try {
      if (jl.contains("position")) {
        const auto& p = jl["position"];
        lights.push_back(
            make_point_light(camera, Eigen::Vector3d(p[0].get<double>(), p[1].get<double>(),
                                                     p[2].get<double>())));
      } else if (jl.contains("direction")) {
        const auto& d = jl["direction"];
        lights.push_back(make_directional_light(
            camera, Eigen::Vector3d(d[0].get<double>(), d[1].get<double>(), d[2].get<double>()),
            anchor));
      } else {
        throw BadConfig("needs 'position' or 'direction'");
      }
    } catch (const Error& e) {
      throw BadConfig("scene config: lights[" + std::to_string(i) + "]: " + e.what());
    }
  }

  Polarity polarity = Polarity::white_lit;
  if (j.contains("polarity")) polarity = polarity_from_string(j["polarity"].get<std::string>());
  if (polarity_override) polarity = *polarity_override;

  if (!j.contains("shadow_maps") || !j["shadow_maps"].is_array())
    throw BadConfig("scene config: missing 'shadow_maps' array");
  if (j["shadow_maps"].size() != lights.size())
    throw BadConfig("scene config: shadow_maps count (" +
                    std::to_string(j["shadow_maps"].size()) + ") != lights count (" +
                    std::to_string(lights.size()) + ")");
  std::vector<ShadowMap> maps;
  for (size_t i = 0; i < j["shadow_maps"].size(); ++i) {
    const std::string rel = j["shadow_maps"][i].get<std::string>();
    const std::string path = (base / rel).string();
    ShadowMap map = read_shadow_pgm(path, polarity, int(i));
    if (map.values.width() != camera.width() || map.values.height() != camera.height())
      throw SizeMismatch("scene config: shadow_maps[" + std::to_string(i) + "] is " +
                         std::to_string(map.values.width()) + "x" +
                         std::to_string(map.values.height()) + ", camera expects " +
                         std::to_string(camera.width()) + "x" + std::to_string(camera.height()));
    maps.push_back(std::move(map));
  }

  double offset = 0.0, scale = 1.0;
  if (j.contains("depth")) {
    offset = j["depth"].value("offset", 0.0);
    scale = j["depth"].value("scale", 1.0);
  }

  LoadedScene out{Scene(std::move(camera), std::move(lights), std::move(maps), offset, scale),
                  polarity, std::nullopt};
  if (j.contains("ground_truth_depth"))
    out.ground_truth_depth = (base / j["ground_truth_depth"].get<std::string>()).string();
  return out;
}

/// Writes a baked scene as config + ground-truth depth PFM + one shadow PGM
/// per light, in the same formats load_scene consumes.
inline std::string save_scene(const std::string& dir, const SyntheticScene& scene,
                              Polarity polarity = Polarity::white_lit) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  const CameraModel& cam = scene.camera;
  j["camera"] = {{"fx", cam.intrinsics()(0, 0)}, {"fy", cam.intrinsics()(1, 1)},
                 {"cx", cam.intrinsics()(0, 2)}, {"cy", cam.intrinsics()(1, 2)},
                 {"width", cam.width()},         {"height", cam.height()}};
  j["polarity"] = to_string(polarity);
  j["lights"] = nlohmann::json::array();
  for (const LightSource& l : scene.lights)
    j["lights"].push_back(
        {{"position", {l.position.x(), l.position.y(), l.position.z()}}});
  j["shadow_maps"] = nlohmann::json::array();
  for (size_t i = 0; i < scene.shadow_maps.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "shadow_%02zu.pgm", i);
    write_shadow_pgm((fs::path(dir) / name).string(), scene.shadow_maps[i], polarity);
    j["shadow_maps"].push_back(name);
  }
  write_pfm((fs::path(dir) / "depth_gt.pfm").string(), scene.height_map);
  j["ground_truth_depth"] = "depth_gt.pfm";
  const auto [offset, scale] = depth_transform_hints(scene.height_map);
  j["depth"] = {{"offset", offset}, {"scale", scale}};
  j["seed"] = scene.seed;

  const std::string config_path = (fs::path(dir) / "scene.json").string();
  auto f = detail::open_output(config_path, false);
  f << j.dump(2) << "\n";
  return config_path;
}

}  // namespace shadowfit
