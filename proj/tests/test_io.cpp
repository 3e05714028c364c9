#include <catch2/catch.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "shadowfit/io.hpp"
#include "shadowfit/random.hpp"
#include "shadowfit/synthetic.hpp"

using namespace shadowfit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("shadowfit_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("pgm shadow maps round-trip", "[io]") {
  TempDir dir;
  SECTION("bytes survive write and read") {
    Image<uint8_t> img(9, 5);
    Rng rng(1);
    for (size_t i = 0; i < img.size(); ++i) img[i] = uint8_t(rng.uniform_index(256));
    write_pgm(dir.file("a.pgm"), img);
    REQUIRE(read_pgm(dir.file("a.pgm")) == img);
  }
  SECTION("polarity controls the byte meaning") {
    ShadowMap map(4, 4);
    map.coverage.fill(1);
    map.values.fill(1.0);
    map.values(1, 1) = 0.0;
    write_shadow_pgm(dir.file("lit.pgm"), map, Polarity::white_lit);
    write_shadow_pgm(dir.file("inv.pgm"), map, Polarity::white_shadow);
    const ShadowMap lit = read_shadow_pgm(dir.file("lit.pgm"), Polarity::white_lit);
    const ShadowMap inv = read_shadow_pgm(dir.file("inv.pgm"), Polarity::white_shadow);
    REQUIRE(lit.values == map.values);
    REQUIRE(inv.values == map.values);
    // reading with the wrong polarity flips every pixel
    const ShadowMap flipped = read_shadow_pgm(dir.file("lit.pgm"), Polarity::white_shadow);
    for (size_t i = 0; i < map.values.size(); ++i)
      REQUIRE(flipped.values[i] == 1.0 - map.values[i]);
  }
  SECTION("an all-white image is all ones under the default polarity") {
    Image<uint8_t> img(6, 6, uint8_t(255));
    write_pgm(dir.file("white.pgm"), img);
    const ShadowMap map = read_shadow_pgm(dir.file("white.pgm"), Polarity::white_lit);
    for (size_t i = 0; i < map.values.size(); ++i) REQUIRE(map.values[i] == 1.0);
  }
  SECTION("missing and malformed files raise named errors") {
    REQUIRE_THROWS_AS(read_pgm(dir.file("nope.pgm")), MissingFile);
    std::ofstream(dir.file("bad.pgm")) << "P6 2 2 255 ....";
    REQUIRE_THROWS_AS(read_pgm(dir.file("bad.pgm")), BadConfig);
  }
}

TEST_CASE("pfm float maps round-trip bit-exactly", "[io]") {
  TempDir dir;
  SECTION("grayscale depth") {
    Image<double> img(7, 3);
    Rng rng(2);
    for (size_t i = 0; i < img.size(); ++i)
      img[i] = snap_to_float(rng.uniform(-10.0, 10.0));
    write_pfm(dir.file("d.pfm"), img);
    const Image<double> back = read_pfm(dir.file("d.pfm"));
    REQUIRE(back == img);
    // a second write produces identical bytes
    write_pfm(dir.file("d2.pfm"), back);
    REQUIRE(slurp(dir.file("d.pfm")) == slurp(dir.file("d2.pfm")));
  }
  SECTION("three-channel normals") {
    NormalMap normals(5, 4);
    Rng rng(3);
    for (size_t i = 0; i < normals.size(); ++i) {
      Eigen::Vector3d n(rng.normal(), rng.normal(), rng.normal());
      n.normalize();
      normals[i] = Eigen::Vector3d(snap_to_float(n.x()), snap_to_float(n.y()),
                                   snap_to_float(n.z()));
    }
    write_pfm_normals(dir.file("n.pfm"), normals);
    const NormalMap back = read_pfm_normals(dir.file("n.pfm"));
    for (size_t i = 0; i < normals.size(); ++i) REQUIRE(back[i] == normals[i]);
  }
  SECTION("grayscale reader rejects color files and vice versa") {
    write_pfm(dir.file("gray.pfm"), Image<double>(2, 2, 1.0));
    REQUIRE_THROWS_AS(read_pfm_normals(dir.file("gray.pfm")), BadConfig);
    write_pfm_normals(dir.file("rgb.pfm"), NormalMap(2, 2, Eigen::Vector3d(0, 0, -1)));
    REQUIRE_THROWS_AS(read_pfm(dir.file("rgb.pfm")), BadConfig);
  }
}

TEST_CASE("scene configs load with validation", "[io]") {
  TempDir dir;
  const int size = 24;
  const CameraModel cam = make_scene_camera(size, size, 2.0, 3.0);
  const Eigen::Vector3d center(0, 0, 3.0);
  const Image<double> grid = make_terrain(
      TerrainKind::gaussian_bumps, TerrainParams{size, size, 3.0, 0.4, 2, 0.16, -1, 0.2}, 3);
  auto lights = make_light_rig(cam, 4, 1.6, 1.6, LightPattern::random, 3, center);
  const SyntheticScene baked = bake_scene(grid, cam, lights, 3);

  SECTION("a baked scene reloads bit-for-bit") {
    const std::string config = save_scene(dir.file("scene"), baked);
    const LoadedScene loaded = load_scene(config);
    REQUIRE(loaded.scene.n_lights() == 4);
    REQUIRE(loaded.scene.camera().intrinsics() == cam.intrinsics());
    REQUIRE(loaded.scene.camera().width() == size);
    for (int j = 0; j < 4; ++j) {
      REQUIRE(loaded.scene.lights()[size_t(j)].position == lights[size_t(j)].position);
      REQUIRE(loaded.scene.truth()[size_t(j)].values == baked.shadow_maps[size_t(j)].values);
    }
    REQUIRE(loaded.ground_truth_depth.has_value());
    REQUIRE(read_pfm(*loaded.ground_truth_depth) == grid);

    // saving the reloaded scene reproduces the files byte for byte
    SyntheticScene again{read_pfm(*loaded.ground_truth_depth), loaded.scene.camera(),
                         loaded.scene.lights(), loaded.scene.truth(), 3};
    save_scene(dir.file("scene2"), again);
    REQUIRE(slurp(dir.file("scene/shadow_00.pgm")) == slurp(dir.file("scene2/shadow_00.pgm")));
    REQUIRE(slurp(dir.file("scene/depth_gt.pfm")) == slurp(dir.file("scene2/depth_gt.pfm")));
  }

  SECTION("validation errors name the offending field") {
    const std::string config = save_scene(dir.file("scene"), baked);

    REQUIRE_THROWS_AS(load_scene(dir.file("missing.json")), MissingFile);

    {
      std::ofstream f(dir.file("scene/broken.json"));
      f << "{ not json";
    }
    REQUIRE_THROWS_AS(load_scene(dir.file("scene/broken.json")), BadConfig);

    nlohmann::json j;
    {
      std::ifstream f(config);
      f >> j;
    }
    auto write_json = [&](const std::string& path, const nlohmann::json& doc) {
      std::ofstream f(path);
      f << doc.dump();
    };
    {
      nlohmann::json no_lights = j;
      no_lights["lights"] = nlohmann::json::array();
      write_json(dir.file("scene/nolights.json"), no_lights);
      try {
        load_scene(dir.file("scene/nolights.json"));
        FAIL("expected BadConfig");
      } catch (const BadConfig& e) {
        REQUIRE(std::string(e.what()).find("'lights'") != std::string::npos);
      }
    }
    {
      nlohmann::json behind = j;
      behind["lights"][0] = {{"position", {0.0, 0.0, -2.0}}};
      write_json(dir.file("scene/behind.json"), behind);
      try {
        load_scene(dir.file("scene/behind.json"));
        FAIL("expected BadConfig");
      } catch (const BadConfig& e) {
        REQUIRE(std::string(e.what()).find("lights[0]") != std::string::npos);
      }
    }
    {
      nlohmann::json missing_map = j;
      missing_map["shadow_maps"][1] = "not_there.pgm";
      write_json(dir.file("scene/missingmap.json"), missing_map);
      REQUIRE_THROWS_AS(load_scene(dir.file("scene/missingmap.json")), MissingFile);
    }
    {
      // a shadow map of the wrong size
      Image<uint8_t> small(8, 8, uint8_t(255));
      write_pgm(dir.file("scene/small.pgm"), small);
      nlohmann::json wrong = j;
      wrong["shadow_maps"][0] = "small.pgm";
      write_json(dir.file("scene/wrongsize.json"), wrong);
      REQUIRE_THROWS_AS(load_scene(dir.file("scene/wrongsize.json")), SizeMismatch);
    }
  }

  SECTION("directional lights are accepted and pushed far away") {
    nlohmann::json j;
    j["camera"] = {{"fx", 36.0}, {"fy", 36.0}, {"cx", 11.5}, {"cy", 11.5},
                   {"width", size}, {"height", size}};
    j["scene_center"] = {0.0, 0.0, 3.0};
    j["lights"] = {{{"direction", {0.8, 0.1, -0.3}}}};
    Image<uint8_t> white(size, size, uint8_t(255));
    write_pgm(dir.file("white.pgm"), white);
    j["shadow_maps"] = {"white.pgm"};
    std::ofstream(dir.file("dir.json")) << j.dump();
    const LoadedScene loaded = load_scene(dir.file("dir.json"));
    REQUIRE(loaded.scene.lights()[0].is_directional);
    REQUIRE((loaded.scene.lights()[0].position - Eigen::Vector3d(0, 0, 3)).norm() ==
            Approx(kDirectionalDistanceFactor * 3.0));

    // steep directions cannot stay in front of the camera
    j["lights"] = {{{"direction", {0.1, 0.0, -0.95}}}};
    std::ofstream(dir.file("steep.json")) << j.dump();
    REQUIRE_THROWS_AS(load_scene(dir.file("steep.json")), BadConfig);
  }
}
