// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "neurtex/metrics.hpp"
#include "neurtex/rng.hpp"
#include "neurtex/views.hpp"
#include "oracles.hpp"

using namespace neurtex;

namespace {

Image textured(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, 1);
  for (float& v : img.data()) v = static_cast<float>(uniform(rng, 0, 1));
  return gaussian_blur(img, 1.0);
}

RayBuffer flat_buffer(int h, int w) {
  RayBuffer b(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto i = b.index(y, x);
      b.object[i] = 0;
      b.point[i] = {0.5 * x, 0.5 * y, 0.0};
      b.normal[i] = {0, 0, 1};
      b.depth[i] = 50;
      b.cos_incidence[i] = 1;
    }
  return b;
}

struct GtSequence {
  Scene scene;
  std::vector<CameraView> cams;
  SequenceGeometry geo;
  std::vector<Image> frames;
};

const GtSequence& gt_sequence() {
  static const GtSequence seq = [] {
    GtSequence s;
    s.scene = generate_scene(3, 33);
    s.cams = make_pan_sequence(s.scene, 24, 5);
    s.geo = sequence_geometry(s.scene, s.cams);
    for (std::size_t t = 0; t < s.cams.size(); ++t) s.frames.push_back(render_photoreal(s.scene, s.geo.bufs[t], s.cams[t]));
    return s;
  }();
  return seq;
}

Image checkerboard(int h, int w, int square, int x0, int y0, int x1, int y1) {
  Image img(h, w, 1, 0.5f);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) img.at(y, x) = ((x - x0) / square + (y - y0) / square) % 2 ? 0.9f : 0.1f;
  return img;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("block matching: identity and constructed shift") {
  const Image a = textured(64, 128, 3);
  const FlowField zero = estimate_flow(a, a);
  for (float v : zero.flow.data()) CHECK(v == 0.0f);

  Image b(64, 128, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 128; ++x) b.at(y, x) = a.at(y, std::max(x - 3, 0));
  const FlowField f = estimate_flow(a, b);
  double err = 0;
  int n = 0;
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 120; ++x) {
      err += std::hypot(f.flow.at(y, x, 0) - 3.0, f.flow.at(y, x, 1));
      ++n;
    }
  CHECK(err / n < 0.5);
  CHECK(estimate_flow_serial(a, b).flow == f.flow);
  CHECK_THROWS_AS(estimate_flow(a, Image(64, 127, 1)), ContractViolation);
}

TEST_CASE("block matching follows the ground-truth flow of a rolling camera") {
  const Scene scene = generate_scene(1, 17);
  const auto views = sample_random_views(scene, 1, 4);
  const CameraView v0 = views[0];
  const double roll = 2.0 * std::numbers::pi / 180.0;
  const Vec3 c = v0.center(), fwd = v0.forward();
  const Vec3 up0 = -v0.rotation.row(1);
  const Vec3 up = up0 * std::cos(roll) + cross(fwd, up0) * std::sin(roll);
  const CameraView v1 = look_at(c, c + fwd * 40.0, up, v0.intrinsics);
  const auto b0 = ray_cast(scene, v0), b1 = ray_cast(scene, v1);
  const FlowField gt = ground_truth_flow(v0, b0, v1, b1);
  const FlowField est = estimate_flow(to_grayscale(render_photoreal(scene, b0, v0)),
                                      to_grayscale(render_photoreal(scene, b1, v1)));
  std::vector<double> epe;
  double gt_mag = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x)
      if (gt.valid[static_cast<std::size_t>(y) * gt.width() + x]) {
        epe.push_back(std::hypot(est.flow.at(y, x, 0) - gt.flow.at(y, x, 0), est.flow.at(y, x, 1) - gt.flow.at(y, x, 1)));
        gt_mag = std::max<double>(gt_mag, std::hypot(gt.flow.at(y, x, 0), gt.flow.at(y, x, 1)));
      }
  REQUIRE(epe.size() > 1000);
  CHECK(gt_mag > 1.0);
  std::nth_element(epe.begin(), epe.begin() + epe.size() / 2, epe.end());
  CHECK(epe[epe.size() / 2] < 1.0);
}

TEST_CASE("optical-flow consistency error") {
  const auto& s = gt_sequence();
  const double gt_err = of_consistency(s.frames, s.geo.gt_flow);
  CHECK(gt_err < 1.0);

  // A constant-colour sequence gives zero estimated flow, so the error is the
  // mean absolute GT flow component.
  std::vector<Image> flat(s.frames.size(), Image(64, 128, 3, 0.4f));
  double expect = 0;
  for (const auto& g : s.geo.gt_flow) {
    double sum = 0;
    std::size_t n = 0;
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x)
        if (g.valid[static_cast<std::size_t>(y) * g.width() + x]) {
          sum += std::abs(g.flow.at(y, x, 0)) + std::abs(g.flow.at(y, x, 1));
          n += 2;
        }
    expect += sum / static_cast<double>(n);
  }
  expect /= static_cast<double>(s.geo.gt_flow.size());
  CHECK(of_consistency(flat, s.geo.gt_flow) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(expect > gt_err);

  const auto still = sequence_geometry(s.scene, {s.cams[0], s.cams[0], s.cams[0]});
  CHECK(of_consistency({s.frames[0], s.frames[0], s.frames[0]}, still.gt_flow) < 1e-9);  // GT flow is zero up to reprojection rounding
  CHECK_THROWS_AS(of_consistency(s.frames, still.gt_flow), ContractViolation);

  // Per-frame independent noise (flicker) is penalised.
  std::vector<Image> noisy;
  for (std::size_t t = 0; t < s.frames.size(); ++t) {
    Image f = s.frames[t];
    Rng rng(derive_seed(9, {t}));
    for (float& v : f.data()) v = std::clamp(v + static_cast<float>(uniform(rng, -0.15, 0.15)), 0.0f, 1.0f);
    noisy.push_back(f);
  }
  CHECK(of_consistency(noisy, s.geo.gt_flow) > gt_err);
}

TEST_CASE("FAST segment test on single pixels") {
  Image g(9, 9, 1, 100.0f);
  g.at(4, 4) = 200.0f;  // isolated bright pixel: every circle pixel is darker
  CHECK(fast_corner(g, 4, 4, 20));
  CHECK(fast_score(g, 4, 4, 20) == doctest::Approx(16 * 80.0));
  CHECK_FALSE(fast_corner(g, 4, 4, 150));
  Image flat(9, 9, 1, 100.0f);
  CHECK_FALSE(fast_corner(flat, 4, 4, 1));
  CHECK(fast_score(flat, 4, 4, 1) == 0.0);
}

TEST_CASE("detect_features: constant image, checkerboard oracle, misses") {
  const RayBuffer buf = flat_buffer(64, 128);
  CHECK(detect_features(Image(64, 128, 1, 0.3f), buf).size() == 0);

  OrbConfig cfg;
  cfg.max_features = 100000;
  const Image board = checkerboard(64, 128, 8, 20, 12, 108, 52);
  const FeatureSet f = detect_features(board, buf, cfg);
  Image g255 = board;
  for (float& v : g255.data()) v *= 255.0f;
  const auto expect = oracle::fast_keypoints(g255, cfg.fast_threshold, cfg.patch_radius + 1);
  std::set<std::pair<int, int>> got;
  for (const auto& k : f.keypoints) got.insert({k.x, k.y});
  CHECK(got == std::set<std::pair<int, int>>(expect.begin(), expect.end()));
  REQUIRE(!got.empty());
  for (const auto& [x, y] : got) {
    // Nearest junction of the board grid (including its outline).
    const int jx = 20 + 8 * static_cast<int>(std::lround((x - 20 + 0.5) / 8.0));
    const int jy = 12 + 8 * static_cast<int>(std::lround((y - 12 + 0.5) / 8.0));
    CHECK(std::abs(x + 0.5 - jx) <= 3.5);
    CHECK(std::abs(y + 0.5 - jy) <= 3.5);
  }

  RayBuffer holes = buf;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) holes.object[holes.index(y, x)] = kMiss;
  for (const auto& k : detect_features(board, holes, cfg).keypoints) CHECK(k.x >= 64);
  for (const auto& k : f.keypoints) CHECK(k.point == buf.point[buf.index(k.y, k.x)]);
}

TEST_CASE("descriptor depends only on the patch") {
  const Image patch = textured(24, 24, 11);
  Image img(64, 128, 1, 0.0f);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      img.at(10 + y, 10 + x) = patch.at(y, x);
      img.at(30 + y, 80 + x) = patch.at(y, x);
    }
  OrbConfig cfg;
  cfg.max_features = 100000;
  const FeatureSet f = detect_features(img, flat_buffer(64, 128), cfg);
  int pairs = 0;
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < f.size(); ++j) {
      const auto &a = f.keypoints[i], &b = f.keypoints[j];
      // Interior of the first copy against the same offset in the second.
      if (a.x - 10 >= 10 && a.x - 10 < 14 && a.y - 10 >= 10 && a.y - 10 < 14 && b.x == a.x + 70 && b.y == a.y + 20) {
        CHECK(f.descriptors[i] == f.descriptors[j]);
        CHECK(a.angle == b.angle);
        ++pairs;
      }
    }
  CHECK(pairs > 0);
  CHECK(detect_features(img, flat_buffer(64, 128), cfg).descriptors == f.descriptors);
}

TEST_CASE("match_and_score") {
  const auto& s = gt_sequence();
  const FeatureSet f = detect_features(s.frames[0], s.geo.bufs[0]);
  REQUIRE(f.size() > 20);
  const MatchScore same = match_and_score(f, f);
  CHECK(same.matches == static_cast<int>(f.size()));
  CHECK(same.correct == static_cast<int>(f.size()));
  CHECK(*same.accuracy() == 100.0);

  const MatchScore none = match_and_score(f, FeatureSet{});
  CHECK_FALSE(none.accuracy().has_value());

  // No shared geometry: the other frame's points are moved far away.
  FeatureSet far = detect_features(s.frames[1], s.geo.bufs[1]);
  for (auto& k : far.keypoints) k.point = k.point + Vec3{1000, 0, 0};
  CHECK(match_and_score(f, far).correct == 0);

  const MatchScore next = match_and_score(f, detect_features(s.frames[1], s.geo.bufs[1]));
  CHECK(next.matches > 10);
  CHECK(*next.accuracy() > 90.0);
}

TEST_CASE("orb_k aggregation and gap monotonicity") {
  const auto& s = gt_sequence();
  const std::vector<Image> repeated(4, s.frames[2]);
  const std::vector<RayBuffer> rep_bufs(4, s.geo.bufs[2]);
  const OrbResult rep = orb_k(repeated, rep_bufs, 1);
  CHECK(*rep.accuracy == 100.0);
  CHECK(rep.pairs == 3);

  const OrbResult r1 = orb_k(s.frames, s.geo.bufs, 1), r5 = orb_k(s.frames, s.geo.bufs, 5),
                  r10 = orb_k(s.frames, s.geo.bufs, 10);
  CHECK(r1.pairs == 23);
  double acc = 0, cnt = 0;
  int defined = 0;
  for (const auto& p : r5.per_pair) {
    cnt += p.correct;
    if (p.accuracy()) {
      acc += *p.accuracy();
      ++defined;
    }
  }
  CHECK(*r5.accuracy == doctest::Approx(acc / defined));
  CHECK(r5.correct_per_pair == doctest::Approx(cnt / static_cast<double>(r5.pairs)));
  CHECK(*r1.accuracy > 90.0);
  CHECK(*r1.accuracy >= *r5.accuracy);
  CHECK(*r5.accuracy >= *r10.accuracy);
  CHECK(r1.correct_per_pair >= r10.correct_per_pair);
  CHECK_THROWS_AS(orb_k(repeated, rep_bufs, 4), ContractViolation);
  CHECK(orb_k(s.frames, s.geo.bufs, 1) == r1);

  // Blurring the ground truth loses correct matches.
  std::vector<Image> blurred;
  for (const auto& f : s.frames) blurred.push_back(gaussian_blur(f, 1.5));
  for (int k : {1, 5, 10}) CHECK(orb_k(s.frames, s.geo.bufs, k).correct_per_pair >= orb_k(blurred, s.geo.bufs, k).correct_per_pair);
}

TEST_CASE("revisit index arithmetic") {
  CHECK(revisit_partner(1, 3, 1) == 5);
  const auto order = revisit_order(3);
  CHECK(order == std::vector<int>{0, 1, 2, 2, 1, 0});
  CHECK(order[5 - 1] == 1);  // index 5 holds view 2, the successor of frame 1
  CHECK(revisit_partner(1, 20, 5) == 2 * 20 - 1 - 4);
  CHECK(revisit_partner(3, 20, 10) == 2 * 20 - 3 - 9);
  for (int T : {3, 12, 20})
    for (int k : {1, 5, 10})
      for (int t = 1; t + k <= T; ++t)
        CHECK(revisit_order(T)[static_cast<std::size_t>(revisit_partner(t, T, k) - 1)] == t + k - 1);
  CHECK_THROWS_AS(revisit_partner(3, 3, 1), ContractViolation);
  CHECK_THROWS_AS(revisit_partner(0, 3, 1), ContractViolation);
  CHECK_THROWS_AS(revisit_protocol(std::vector<FeatureSet>(6), 5), ContractViolation);
  CHECK_THROWS_AS(revisit_protocol(std::vector<FeatureSet>(5), 1), ContractViolation);
}

TEST_CASE("revisit equals orb_k for view-pure renderers and drops under drift") {
  const auto& s = gt_sequence();
  const int T = static_cast<int>(s.frames.size());
  const auto order = revisit_order(T);
  std::vector<Image> ext;
  std::vector<RayBuffer> ext_bufs;
  for (int i : order) {
    ext.push_back(render_photoreal(s.scene, s.geo.bufs[static_cast<std::size_t>(i)], s.cams[static_cast<std::size_t>(i)]));
    ext_bufs.push_back(s.geo.bufs[static_cast<std::size_t>(i)]);
  }
  for (int k : {1, 5, 10}) CHECK(revisit_protocol(ext, ext_bufs, k) == orb_k(s.frames, s.geo.bufs, k));

  std::vector<Image> drift_fwd, drift_ext;
  for (int n = 0; n < 2 * T; ++n) drift_ext.push_back(drift_noise_frame(ext[static_cast<std::size_t>(n)], n, 0.02, 3));
  for (int n = 0; n < T; ++n) drift_fwd.push_back(drift_ext[static_cast<std::size_t>(n)]);
  const OrbResult fwd = orb_k(drift_fwd, s.geo.bufs, 1), rev = revisit_protocol(drift_ext, ext_bufs, 1);
  CHECK(*rev.accuracy < *fwd.accuracy);
  CHECK(rev.correct_per_pair < fwd.correct_per_pair);
}

TEST_CASE("consistency report") {
  const auto& s = gt_sequence();
  std::vector<Image> ext;
  for (int i : revisit_order(static_cast<int>(s.frames.size()))) ext.push_back(s.frames[static_cast<std::size_t>(i)]);
  const ConsistencyReport r = evaluate_sequence("seq0", s.frames, s.geo, &ext);
  REQUIRE(r.per_k.size() == 3);
  REQUIRE(r.revisit.size() == 3);
  const nlohmann::json j = r;
  CHECK(j.at("sequence_id") == "seq0");
  CHECK(j.at("of_error").get<double>() == r.of_error);
  CHECK(j.at("per_k").at("10").at("correct_per_pair").get<double>() == r.per_k[2].correct_per_pair);
  CHECK(j.at("revisit").at("1") == j.at("per_k").at("1"));
  const ConsistencyReport again = evaluate_sequence("seq0", s.frames, s.geo, &ext);
  CHECK(nlohmann::json(again) == j);
  const std::string csv = report_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  ConsistencyReport empty;
  empty.per_k.push_back(OrbResult{});
  CHECK(nlohmann::json(empty).at("per_k").at("1").at("accuracy").is_null());
  CHECK_THROWS_AS(evaluate_sequence("x", s.frames, s.geo, &s.frames), ContractViolation);
}

}  // TEST_SUITE
