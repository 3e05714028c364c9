#include <catch2/catch.hpp>
#include <cmath>

#include "shadowfit/synthetic.hpp"

using namespace shadowfit;

TEST_CASE("analytic terrains", "[synthetic]") {
  SECTION("plane is constant") {
    const Image<double> t =
        make_terrain(TerrainKind::plane, TerrainParams{16, 16, 3.0, 0.4, 2, 0.16, -1, 0.2}, 1);
    for (size_t i = 0; i < t.size(); ++i) REQUIRE(t[i] == 3.0);
  }
  SECTION("step has exactly one discontinuity column") {
    TerrainParams p{16, 16, 3.0, 0.5, 2, 0.16, 6, 0.2};
    const Image<double> t = make_terrain(TerrainKind::step, p, 1);
    for (int v = 0; v < 16; ++v) {
      for (int u = 0; u + 1 < 16; ++u) {
        const double jump = std::abs(t(u + 1, v) - t(u, v));
        if (u == 5)
          REQUIRE(jump == Approx(0.5));
        else
          REQUIRE(jump == 0.0);
      }
    }
  }
  SECTION("pillar rises from the base plane") {
    const Image<double> t =
        make_terrain(TerrainKind::pillar, TerrainParams{32, 32, 3.0, 0.6, 2, 0.16, -1, 0.25}, 1);
    REQUIRE(t(16, 16) == Approx(2.4));
    REQUIRE(t(0, 0) == 3.0);
  }
  SECTION("gaussian bumps are deterministic per seed and stay above the base") {
    TerrainParams p{24, 24, 3.0, 0.4, 3, 0.15, -1, 0.2};
    const Image<double> a = make_terrain(TerrainKind::gaussian_bumps, p, 7);
    const Image<double> b = make_terrain(TerrainKind::gaussian_bumps, p, 7);
    const Image<double> c = make_terrain(TerrainKind::gaussian_bumps, p, 8);
    REQUIRE(a == b);
    REQUIRE(!(a == c));
    for (size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i] > 0.0);
      REQUIRE(a[i] <= 3.0);
    }
  }
  SECTION("ridge is deterministic") {
    TerrainParams p{24, 24, 3.0, 0.4, 1, 0.2, -1, 0.2};
    REQUIRE(make_terrain(TerrainKind::ridge, p, 3) == make_terrain(TerrainKind::ridge, p, 3));
  }
  SECTION("invalid parameters are rejected") {
    REQUIRE_THROWS_AS(
        make_terrain(TerrainKind::plane, TerrainParams{1, 8, 3.0, 0.4, 2, 0.16, -1, 0.2}, 1),
        InvalidParams);
    REQUIRE_THROWS_AS(
        make_terrain(TerrainKind::plane, TerrainParams{8, 8, 0.3, 0.4, 2, 0.16, -1, 0.2}, 1),
        InvalidParams);
    REQUIRE_THROWS_AS(terrain_kind_from_string("volcano"), InvalidParams);
  }
}

TEST_CASE("light rigs", "[synthetic]") {
  const CameraModel cam = make_scene_camera(32, 32, 2.0, 3.0);
  const Eigen::Vector3d center(0, 0, 3.0);

  SECTION("ring spaces lights uniformly in azimuth") {
    const auto lights = make_light_rig(cam, 4, 1.5, 1.5, LightPattern::ring, 0, center);
    REQUIRE(lights.size() == 4);
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector3d r = lights[size_t(i)].position - center;
      const double phi = std::atan2(r.y(), r.x());
      const double expected = 2.0 * M_PI * i / 4.0;
      const double diff = std::remainder(phi - expected, 2.0 * M_PI);
      REQUIRE(std::abs(diff) < 1e-9);
      REQUIRE(r.z() == Approx(-1.5));
    }
  }
  SECTION("dome keeps lights at one distance from the center") {
    const auto lights = make_light_rig(cam, 16, 1.2, 1.8, LightPattern::dome, 0, center);
    const double rho = std::hypot(1.2, 1.8);
    for (const auto& l : lights)
      REQUIRE(std::abs((l.position - center).norm() - rho) < 1e-9);
  }
  SECTION("random rigs are seed-deterministic") {
    const auto a = make_light_rig(cam, 8, 1.5, 1.5, LightPattern::random, 5, center);
    const auto b = make_light_rig(cam, 8, 1.5, 1.5, LightPattern::random, 5, center);
    for (size_t i = 0; i < a.size(); ++i)
      REQUIRE(a[i].position == b[i].position);
  }
  SECTION("lights behind the camera are rejected") {
    REQUIRE_THROWS_AS(make_light_rig(cam, 4, 1.0, 5.0, LightPattern::ring, 0, center),
                      InvalidParams);
    REQUIRE_THROWS_AS(make_light_rig(cam, 0, 1.0, 1.0, LightPattern::ring, 0, center),
                      InvalidParams);
  }
}

TEST_CASE("baked scenes carry exact binary shadow maps", "[synthetic]") {
  const int size = 32;
  const CameraModel cam = make_scene_camera(size, size, 2.0, 3.0);
  const Eigen::Vector3d center(0, 0, 3.0);

  SECTION("plane terrain bakes to all-ones maps") {
    auto lights = make_ring_rig_at_elevation(cam, 3, 2.3, 45.0, center);
    const SyntheticScene scene = bake_scene(
        make_terrain(TerrainKind::plane, TerrainParams{size, size, 3.0, 0, 1, 0.2, -1, 0.2}, 0),
        cam, lights, 0);
    REQUIRE(scene.shadow_maps.size() == 3);
    for (const auto& m : scene.shadow_maps)
      for (size_t i = 0; i < m.values.size(); ++i) REQUIRE(m.values[i] == 1.0);
  }

  SECTION("opposing lights on a centered pillar give mirrored masks") {
    const Image<double> grid =
        make_terrain(TerrainKind::pillar, TerrainParams{size, size, 3.0, 0.5, 1, 0.2, -1, 0.2}, 0);
    std::vector<LightSource> lights = {
        make_point_light(cam, center + Eigen::Vector3d(1.3, 0.2, -1.1)),
        make_point_light(cam, center + Eigen::Vector3d(-1.3, 0.2, -1.1))};
    const SyntheticScene scene = bake_scene(grid, cam, lights, 0);
    long mismatch = 0;
    for (int v = 0; v < size; ++v)
      for (int u = 0; u < size; ++u)
        if (scene.shadow_maps[0].values(u, v) != scene.shadow_maps[1].values(size - 1 - u, v))
          ++mismatch;
    REQUIRE(mismatch == 0);
  }

  SECTION("shadow coverage grows as the lights drop toward the horizon") {
    const Image<double> grid = make_terrain(
        TerrainKind::gaussian_bumps, TerrainParams{size, size, 3.0, 0.55, 3, 0.13, -1, 0.2}, 11);
    double prev = -1.0;
    for (double elev : {80.0, 60.0, 40.0, 20.0}) {
      auto lights = make_ring_rig_at_elevation(cam, 4, 2.3, elev, center);
      const SyntheticScene scene = bake_scene(grid, cam, lights, 0);
      long shadowed = 0;
      for (const auto& m : scene.shadow_maps)
        for (size_t i = 0; i < m.values.size(); ++i)
          if (m.values[i] == 0.0) ++shadowed;
      REQUIRE(shadowed > prev);
      prev = double(shadowed);
    }
  }

  SECTION("all maps are exactly binary and rebaking reproduces them") {
    const Image<double> grid = make_terrain(
        TerrainKind::gaussian_bumps, TerrainParams{size, size, 3.0, 0.4, 2, 0.16, -1, 0.2}, 4);
    auto lights = make_light_rig(cam, 6, 1.6, 1.6, LightPattern::random, 4, center);
    const SyntheticScene a = bake_scene(grid, cam, lights, 4);
    const SyntheticScene b = bake_scene(grid, cam, lights, 4);
    for (size_t j = 0; j < a.shadow_maps.size(); ++j) {
      REQUIRE(a.shadow_maps[j].values == b.shadow_maps[j].values);
      for (size_t i = 0; i < a.shadow_maps[j].values.size(); ++i) {
        const double x = a.shadow_maps[j].values[i];
        REQUIRE((x == 0.0 || x == 1.0));
      }
    }
  }

  SECTION("the pixel under an in-frame light stays illuminated") {
    const Image<double> grid = make_terrain(
        TerrainKind::gaussian_bumps, TerrainParams{size, size, 3.0, 0.4, 3, 0.15, -1, 0.2}, 9);
    const LightSource light = make_point_light(cam, Eigen::Vector3d(0.15, -0.1, 1.1));
    REQUIRE(cam.in_frame(light.image_projection));
    const ShadowMap map = render_shadow_map_r3_oracle(grid, cam, light);
    const int u = int(std::llround(light.image_projection.x()));
    const int v = int(std::llround(light.image_projection.y()));
    REQUIRE(map.values(u, v) == 1.0);
  }
}
