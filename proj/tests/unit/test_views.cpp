// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "neurtex/errors.hpp"
#include "neurtex/flow.hpp"
#include "neurtex/views.hpp"

using namespace neurtex;

TEST_SUITE("views") {

TEST_CASE("random views are deterministic and meet coverage") {
  const auto scene = generate_scene(0, 42);
  const auto a = sample_random_views(scene, 8, 123);
  const auto b = sample_random_views(scene, 8, 123);
  CHECK(a == b);
  for (const auto& v : a) {
    CHECK_NOTHROW(v.validate());
    CHECK(ray_cast(scene, v).coverage() >= 0.5);
  }
}

TEST_CASE("views from distinct seeds are pairwise distinct") {
  const auto scene = generate_scene(1, 42);
  std::vector<CameraView> views;
  for (int s = 0; s < 100; ++s) views.push_back(sample_random_views(scene, 1, 1000 + s).front());
  for (std::size_t i = 0; i < views.size(); ++i)
    for (std::size_t j = i + 1; j < views.size(); ++j) CHECK_FALSE(views[i] == views[j]);
}

TEST_CASE("impossible coverage is a configuration error") {
  const auto scene = generate_scene(0, 1);
  ViewSamplingConfig cfg;
  cfg.min_coverage = 1.01;
  cfg.max_attempts = 5;
  CHECK_THROWS_AS(sample_random_views(scene, 1, 0, cfg), ConfigError);
}

TEST_CASE("pan sequence respects speed bounds and produces moderate flow") {
  for (int s = 0; s < 3; ++s) {
    const auto scene = generate_scene(s, 500 + s);
    PanConfig cfg;
    const auto seq = make_pan_sequence(scene, 30, 9 + s, cfg);
    REQUIRE(seq.size() == 30);
    CHECK_FALSE(seq.front() == seq.back());
    std::vector<double> mags;
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      CHECK(norm(seq[t + 1].center() - seq[t].center()) <= cfg.max_speed + 1e-9);
      const auto flow = ground_truth_flow(scene, seq[t], seq[t + 1]);
      for (int y = 0; y < flow.height(); ++y)
        for (int x = 0; x < flow.width(); ++x)
          if (flow.valid[static_cast<std::size_t>(y) * flow.width() + x])
            mags.push_back(std::hypot(flow.flow.at(y, x, 0), flow.flow.at(y, x, 1)));
    }
    std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
    const double median = mags[mags.size() / 2];
    CHECK(median >= 0.5);
    CHECK(median <= 20.0);
  }
}

TEST_CASE("camera JSON round trip") {
  const auto scene = generate_scene(0, 4);
  const auto views = sample_random_views(scene, 3, 4);
  const auto path = std::filesystem::temp_directory_path() / "neurtex_test_views" / "cams.json";
  save_cameras(path, views);
  const auto back = load_cameras(path);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) CHECK(back[i].rotation(r, c) == views[i].rotation(r, c));
    CHECK(back[i].translation == views[i].translation);
  }
}

TEST_CASE("camera validation") {
  auto v = look_at({0, 0, 10}, {0, 0, 0}, {0, 1, 0}, make_intrinsics(64, 128, 100));
  CHECK_NOTHROW(v.validate());
  v.rotation(0, 0) *= 1.01;
  CHECK_THROWS_AS(v.validate(), ContractViolation);
}

}  // TEST_SUITE
