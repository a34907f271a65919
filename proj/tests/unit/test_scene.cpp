// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "neurtex/binary_io.hpp"
#include "neurtex/camera.hpp"
#include "neurtex/errors.hpp"
#include "neurtex/rng.hpp"
#include "neurtex/scene.hpp"
#include "neurtex/views.hpp"
#include "oracles.hpp"

using namespace neurtex;

namespace {

Scene unit_sphere_scene(double radius = 1.0) {
  SceneObject o;
  o.id = 0;
  o.name = "ball";
  o.shape = Sphere{{0, 0, 0}, radius};
  return Scene(0, 1, {o});
}

CameraView axis_camera(double dist, int h = 33, int w = 65) {
  return look_at({0, 0, dist}, {0, 0, 0}, {0, 1, 0}, make_intrinsics(h, w, 100.0));
}

}  // namespace

TEST_SUITE("scene") {

TEST_CASE("center pixel on an axial sphere") {
  const auto scene = unit_sphere_scene(2.0);
  const auto view = axis_camera(10.0);
  const auto buf = ray_cast(scene, view);
  const auto i = buf.index(16, 32);
  REQUIRE(buf.object[i] == 0);
  CHECK(buf.point[i].x == doctest::Approx(0).epsilon(1e-12));
  CHECK(buf.point[i].z == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(buf.depth[i] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("a ray past all objects is a miss") {
  const auto scene = unit_sphere_scene(1.0);
  const auto buf = ray_cast(scene, axis_camera(10.0));
  CHECK(buf.object[buf.index(0, 0)] == kMiss);
}

TEST_CASE("normals are unit and face the camera") {
  const auto scene = generate_scene(0, 11);
  const auto views = sample_random_views(scene, 3, 5);
  for (const auto& v : views) {
    const auto buf = ray_cast(scene, v);
    for (int y = 0; y < buf.height; ++y)
      for (int x = 0; x < buf.width; ++x) {
        const auto i = buf.index(y, x);
        if (!buf.hit(i)) continue;
        CHECK(std::abs(norm(buf.normal[i]) - 1.0) < 1e-6);
        CHECK(dot(buf.normal[i], v.ray_direction(x, y)) < 0.0);
        CHECK(buf.depth[i] > 0.0);
        CHECK(buf.depth[i] == doctest::Approx(v.to_camera(buf.point[i]).z).epsilon(1e-12));
      }
  }
}

TEST_CASE("depth agrees with a brute-force intersection oracle") {
  Rng rng(3);
  int checked = 0, hits = 0;
  for (int s = 0; s < 4; ++s) {
    const auto scene = generate_scene(s, 100 + s);
    const auto views = sample_random_views(scene, 2, 7 + s);
    for (const auto& v : views) {
      const auto buf = ray_cast(scene, v);
      for (int k = 0; k < 125; ++k) {
        const int x = static_cast<int>(rng() % static_cast<unsigned>(buf.width));
        const int y = static_cast<int>(rng() % static_cast<unsigned>(buf.height));
        Vec3 o, d;
        oracle::pixel_ray(v, x, y, o, d);
        const auto ref = oracle::brute_force_trace(scene, o, d);
        const auto i = buf.index(y, x);
        ++checked;
        REQUIRE(buf.object[i] == ref.object);
        if (ref.object == kMiss) continue;
        ++hits;
        const double ref_depth = dot(ref.point - v.center(), v.forward());
        CHECK(std::abs(buf.depth[i] - ref_depth) <= 1e-4 * ref_depth);
      }
    }
  }
  CHECK(checked == 1000);
  CHECK(hits > 900);
}

TEST_CASE("serial and parallel ray casts agree") {
  const auto scene = generate_scene(2, 9);
  const auto v = sample_random_views(scene, 1, 1).front();
  const auto a = ray_cast(scene, v);
  const auto b = ray_cast_serial(scene, v);
  CHECK(a.object == b.object);
  CHECK(a.depth == b.depth);
}

TEST_CASE("scene JSON round trip") {
  const auto scene = generate_scene(4, 77);
  const auto again = scene_from_json(scene_to_json(scene));
  REQUIRE(again.object_count() == scene.object_count());
  const auto v = sample_random_views(scene, 1, 3).front();
  CHECK(ray_cast(scene, v).depth == ray_cast(again, v).depth);
}

TEST_CASE("scene validation rejects sparse ids") {
  SceneObject o;
  o.id = 1;
  o.shape = Sphere{};
  CHECK_THROWS_AS(Scene(0, 0, {o}), ConfigError);
}

TEST_CASE("reference render: misses are black, shading depends on object and angle") {
  const auto scene = generate_scene(1, 5);
  RayBuffer empty(4, 6);
  const auto black = render_reference(scene, empty);
  for (float v : black.data()) CHECK(v == 0.0f);

  const auto v = sample_random_views(scene, 1, 2).front();
  const auto buf = ray_cast(scene, v);
  const auto img = render_reference(scene, buf);
  CHECK(img == oracle::render_reference(scene, buf));
  for (float c : img.data()) {
    CHECK(c >= 0.0f);
    CHECK(c <= 1.0f);
  }
  RayBuffer two(1, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    two.object[i] = 3;
    two.cos_incidence[i] = 0.7;
    two.normal[i] = {0, 0, 1};
  }
  two.point[0] = {1, 2, 3};
  two.point[1] = {-4, 5, 9};
  const auto pair = render_reference(scene, two);
  for (int c = 0; c < 3; ++c) CHECK(pair.at(0, 0, c) == pair.at(0, 1, c));
}

TEST_CASE("photoreal: center brighter than corner on a fronto-parallel plane") {
  SceneObject wall;
  wall.id = 0;
  wall.shape = HeightField{-500, 500, -500, 500, 0.0, {}};
  const Scene scene(0, 3, {wall});
  const auto view = look_at({0, 0, 50}, {0, 0, 0}, {0, 1, 0}, make_intrinsics(64, 128, 100));
  RayBuffer buf = ray_cast(scene, view);
  // Constant depth and incidence so only the radial term varies.
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf.depth[i] = 50.0;
    buf.cos_incidence[i] = 1.0;
    buf.point[i] = {0, 0, 0};
  }
  const auto img = render_photoreal(scene, buf, view, PhotorealShading{0.9, 0.6, 0.012, 0.3});
  double center = 0, corner = 0;
  for (int c = 0; c < 3; ++c) {
    center += img.at(31, 63, c);
    corner += img.at(0, 0, c);
  }
  CHECK(center > corner);
}

TEST_CASE("photoreal is albedo times a scalar gain and deterministic") {
  const auto scene = generate_scene(3, 21);
  const auto views = sample_random_views(scene, 2, 4);
  const auto b0 = ray_cast(scene, views[0]);
  const auto b1 = ray_cast(scene, views[1]);
  const auto i0 = render_photoreal(scene, b0, views[0]);
  CHECK(i0 == render_photoreal(scene, b0, views[0]));
  const auto i1 = render_photoreal(scene, b1, views[1]);
  const auto map = build_warp(views[0], b0, views[1], b1);
  int compared = 0;
  for (std::size_t q = 0; q < b1.size(); ++q) {
    if (!map.valid[q]) continue;
    // Evaluate both renders at the exact same 3D point through the albedo.
    const Vec3 p = b1.point[q];
    const Vec3 a = photoreal_albedo(scene, b1.object[q], p);
    const int x = static_cast<int>(q % static_cast<std::size_t>(b1.width)), y = static_cast<int>(q / b1.width);
    const Vec3 rgb{i1.at(y, x, 0), i1.at(y, x, 1), i1.at(y, x, 2)};
    const double cosang = dot(a, rgb) / (norm(a) * norm(rgb));
    CHECK(std::acos(std::min(1.0, cosang)) < 1e-5);
    ++compared;
  }
  CHECK(compared > 100);
}

TEST_CASE("photoreal: same surface point seen from two views keeps channel ratios") {
  const auto scene = generate_scene(5, 8);
  const Vec3 s = scene.viewing_region().lo + (scene.viewing_region().hi - scene.viewing_region().lo) * 0.5;
  // Cast two rays at the same surface point from different cameras.
  const auto top = look_at(s + Vec3{0, 0, 50}, s, {0, 1, 0}, make_intrinsics(65, 129, 100));
  const auto hit = scene.trace(top.center(), top.ray_direction(64, 32));
  REQUIRE(hit);
  const Vec3 p = top.center() + top.ray_direction(64, 32) * hit->second.t;
  const auto side = look_at(p + Vec3{12, -7, 40}, p, {0, 1, 0}, make_intrinsics(65, 129, 100));
  const auto b_top = ray_cast(scene, top);
  const auto b_side = ray_cast(scene, side);
  const auto i_top = render_photoreal(scene, b_top, top);
  const auto i_side = render_photoreal(scene, b_side, side);
  const auto bs = b_side.index(32, 64);
  REQUIRE(b_side.object[bs] == hit->first);
  REQUIRE(norm(b_side.point[bs] - p) < 1e-6);
  for (int c = 1; c < 3; ++c) {
    const double r_top = i_top.at(32, 64, c) / double(i_top.at(32, 64, 0));
    const double r_side = i_side.at(32, 64, c) / double(i_side.at(32, 64, 0));
    CHECK(std::abs(r_top - r_side) < 1e-6);
  }
}

TEST_CASE("ray buffer packs and unpacks") {
  const auto scene = generate_scene(0, 2);
  const auto v = sample_random_views(scene, 1, 9).front();
  const auto buf = ray_cast(scene, v);
  const auto back = unpack_ray_buffer(pack_ray_buffer(buf));
  CHECK(back.object == buf.object);
  const auto i = buf.index(10, 10);
  CHECK(std::abs(back.depth[i] - buf.depth[i]) < 1e-4);
}

TEST_CASE("image containers round trip") {
  Image img(3, 5, 4);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = 0.1f * static_cast<float>(i);
  const auto dir = std::filesystem::temp_directory_path() / "neurtex_test_io";
  write_ntimg(dir / "a.ntimg", img);
  CHECK(read_ntimg(dir / "a.ntimg") == img);
  CHECK(std::filesystem::file_size(dir / "a.ntimg") == 20 + img.size() * 4);
  CHECK_THROWS_AS(read_ntimg(dir / "missing.ntimg"), IoError);
  Image rgb(2, 2, 3, 0.5f);
  write_ppm(dir / "b.ppm", rgb);
  const auto back = read_ppm(dir / "b.ppm");
  CHECK(std::abs(back.at(1, 1, 2) - 128.0f / 255.0f) < 1e-6);
}

}  // TEST_SUITE
