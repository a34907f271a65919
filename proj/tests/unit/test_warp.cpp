// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "neurtex/errors.hpp"
#include "neurtex/flow.hpp"
#include "neurtex/rng.hpp"
#include "neurtex/views.hpp"
#include "neurtex/warp.hpp"
#include "oracles.hpp"

using namespace neurtex;

namespace {

Scene plane_scene() {
  SceneObject wall;
  wall.id = 0;
  wall.name = "wall";
  wall.shape = HeightField{-400, 400, -400, 400, 0.0, {}};
  return Scene(0, 1, {wall});
}

CameraView top_view(double x, double y, double z) {
  return look_at({x, y, z}, {x, y, 0}, {0, 1, 0}, make_intrinsics(64, 128, 100));
}

}  // namespace

TEST_SUITE("warp") {

TEST_CASE("reprojection basics") {
  CameraView v;
  v.intrinsics = Intrinsics{100, 100, 50, 30, 200, 100};
  const auto p = reproject({1, 0, 1}, v);
  REQUIRE(p);
  CHECK(p->x == doctest::Approx(150));
  CHECK(p->y == doctest::Approx(30));
  const auto axis = reproject({0, 0, 7}, v);
  CHECK(axis->x == 50.0);
  CHECK(axis->y == 30.0);
  CHECK_FALSE(reproject({0, 0, -1}, v));
}

TEST_CASE("re-casting the ray through a reprojection passes through the point") {
  const auto scene = generate_scene(0, 3);
  const auto views = sample_random_views(scene, 2, 10);
  const auto buf = ray_cast(scene, views[0]);
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const auto q = static_cast<std::size_t>(rng() % buf.size());
    if (!buf.hit(q)) continue;
    const Vec3 s = buf.point[q];
    const auto p = reproject(s, views[1]);
    if (!p) continue;
    const Vec3 c = views[1].center(), d = views[1].ray_direction(p->x, p->y);
    const double t = dot(s - c, d);
    CHECK(norm(c + d * t - s) < 1e-3);
  }
}

TEST_CASE("occlusion test") {
  const auto scene = generate_scene(1, 3);
  const auto view = sample_random_views(scene, 1, 2).front();
  const auto buf = ray_cast(scene, view);
  for (std::size_t i = 0; i < buf.size(); i += 37) {
    if (!buf.hit(i)) continue;
    const Vec3 s = buf.point[i];
    CHECK_FALSE(occluded(s, view, buf, 1.0));
    const Vec3 dir = normalize(s - view.center());
    CHECK(occluded(s + dir * 10.0, view, buf, 1.0));
  }
  CHECK_THROWS_AS(occluded(view.center() - view.forward() * 5.0, view, buf, 1.0), ContractViolation);
}

TEST_CASE("identity warp has zero displacement") {
  const auto scene = generate_scene(2, 4);
  const auto v = sample_random_views(scene, 1, 3).front();
  const auto buf = ray_cast(scene, v);
  const auto map = build_warp(v, buf, v, buf);
  for (std::size_t q = 0; q < buf.size(); ++q) {
    if (!buf.hit(q)) continue;
    const int x = static_cast<int>(q % buf.width), y = static_cast<int>(q / buf.width);
    CHECK(map.valid[q]);
    CHECK(std::abs(map.x[q] - x) < 1e-3);
    CHECK(std::abs(map.y[q] - y) < 1e-3);
    CHECK(map.winner[q] == static_cast<std::int32_t>(q));
  }
  Image img(buf.height, buf.width, 3);
  Rng rng(2);
  for (auto& p : img.data()) p = static_cast<float>(uniform(rng, 0, 1));
  const auto out = warp_image(img, map);
  for (std::size_t q = 0; q < buf.size(); ++q)
    if (map.valid[q])
      for (int c = 0; c < 3; ++c) CHECK(out.data()[q * 3 + c] == img.data()[q * 3 + c]);
}

TEST_CASE("all-invalid map produces a zero image") {
  const auto scene = plane_scene();
  const auto a = top_view(0, 0, 50);
  const auto b = top_view(5000, 0, 50);  // disjoint footprints
  const auto ba = ray_cast(scene, a), bb = ray_cast(scene, b);
  const auto map = build_warp(a, ba, b, bb);
  CHECK(map.match_count() == 0);
  Image img(64, 128, 3, 0.7f);
  const auto out = warp_image(img, map);
  for (float v : out.data()) CHECK(v == 0.0f);
}

TEST_CASE("camera behind an occluder yields an empty match set") {
  SceneObject floor;
  floor.id = 0;
  floor.shape = HeightField{-100, 100, -100, 100, 0.0, {}};
  SceneObject lid;
  lid.id = 1;
  lid.shape = Ellipsoid{{0, 0, 30}, {300, 300, 1}};
  const Scene scene(0, 1, {floor, lid});
  // View j sits between floor and lid, view i above the lid.
  const auto vj = top_view(0, 0, 20);
  const auto vi = top_view(0, 0, 80);
  const auto map = build_warp(vi, ray_cast(scene, vi), vj, ray_cast(scene, vj));
  CHECK(map.match_count() == 0);
}

TEST_CASE("match set equals the per-pixel oracle; serial and parallel agree") {
  Rng rng(11);
  for (int k = 0; k < 6; ++k) {
    const auto scene = generate_scene(k, 60 + k);
    const auto vi = sample_random_views(scene, 1, 100 + k).front();
    const auto look = look_at_point(scene, vi);
    REQUIRE(look);
    const auto vj = sample_view_near(scene, *look, 10.0, 200 + k);
    const auto bi = ray_cast(scene, vi), bj = ray_cast(scene, vj);
    const auto map = build_warp(vi, bi, vj, bj);
    const auto ref = oracle::warp_targets(vi, bi, vj, bj, 1.0);
    CHECK(map.match_count() == oracle::match_count(ref));
    for (std::size_t q = 0; q < bj.size(); ++q) CHECK(bool(map.valid[q]) == (ref[q] >= 0));
    const auto ser = build_warp_serial(vi, bi, vj, bj);
    CHECK(ser.winner == map.winner);
    CHECK(ser.valid == map.valid);
  }
}

TEST_CASE("translation over a plane: warp equals a shift by the ground-truth flow") {
  const auto scene = plane_scene();
  const auto a = top_view(0, 0, 50);
  const auto b = top_view(1.0, 0, 50);
  const auto ba = ray_cast(scene, a), bb = ray_cast(scene, b);
  const auto flow = ground_truth_flow(a, ba, b, bb);
  // Horizontal flow f * dx / depth: moving the camera +x shifts content left.
  const double expected = -100.0 * 1.0 / 50.0;
  for (std::size_t i = 0; i < ba.size(); ++i)
    if (flow.valid[i]) {
      CHECK(flow.flow.data()[i * 2] == doctest::Approx(expected).epsilon(1e-6));
      CHECK(std::abs(flow.flow.data()[i * 2 + 1]) < 1e-6);
    }
  Image img(64, 128, 1);
  Rng rng(6);
  for (auto& v : img.data()) v = static_cast<float>(uniform(rng, 0, 1));
  // img lives in view b; warp it into view a and compare with the shift.
  const auto map = build_warp(a, ba, b, bb);
  const auto warped = warp_image(img, map);
  int mismatched = 0, compared = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 128; ++x) {
      const int sx = x + static_cast<int>(std::lround(expected));
      if (sx < 0 || sx >= 128) continue;
      ++compared;
      if (warped.at(y, x) != img.at(y, sx)) {
        ++mismatched;
        CHECK((x <= 1 || x >= 126));
      }
    }
  CHECK(compared > 7000);
  CHECK(mismatched <= 2 * 64);
}

TEST_CASE("identical views give zero flow") {
  const auto scene = generate_scene(3, 1);
  const auto v = sample_random_views(scene, 1, 8).front();
  const auto f = ground_truth_flow(scene, v, v);
  for (std::size_t i = 0; i < f.valid.size(); ++i)
    if (f.valid[i]) {
      CHECK(std::abs(f.flow.data()[2 * i]) < 1e-4);
      CHECK(std::abs(f.flow.data()[2 * i + 1]) < 1e-4);
    }
}

TEST_CASE("flow endpoints land on the same surface point") {
  const auto scene = generate_scene(4, 9);
  const auto seq = make_pan_sequence(scene, 6, 3);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const auto b0 = ray_cast(scene, seq[t]);
    const auto f = ground_truth_flow(scene, seq[t], seq[t + 1]);
    for (std::size_t i = 0; i < b0.size(); i += 13) {
      if (!f.valid[i]) continue;
      const double x = double(i % b0.width) + f.flow.data()[2 * i];
      const double y = double(i / b0.width) + f.flow.data()[2 * i + 1];
      // Inverse search: cast through the endpoint and compare 3D points.
      const auto hit = scene.trace(seq[t + 1].center(), seq[t + 1].ray_direction(x, y));
      REQUIRE(hit);
      const Vec3 p = seq[t + 1].center() + seq[t + 1].ray_direction(x, y) * hit->second.t;
      CHECK(norm(p - b0.point[i]) < 1e-3);
      // Endpoint is within 0.51 px of the projection of the re-cast point.
      const auto back = seq[t + 1].project(p);
      CHECK(std::hypot(back->x - x, back->y - y) < 0.51);
    }
  }
}

TEST_CASE("warp file round trip") {
  const auto scene = generate_scene(0, 1);
  const auto views = sample_random_views(scene, 2, 1);
  const auto b0 = ray_cast(scene, views[0]), b1 = ray_cast(scene, views[1]);
  const auto map = build_warp(views[0], b0, views[1], b1);
  const auto path = std::filesystem::temp_directory_path() / "neurtex_test_warp" / "w.ntwrp";
  write_warp(path, map);
  const auto back = read_warp(path);
  CHECK(back.x == map.x);
  CHECK(back.y == map.y);
  CHECK(back.valid == map.valid);
}

}  // TEST_SUITE
