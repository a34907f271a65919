// SPDX-License-Identifier: Apache-2.0
#include "neurtex/views.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "neurtex/binary_io.hpp"
#include "neurtex/errors.hpp"
#include "neurtex/rng.hpp"

namespace neurtex {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::optional<Vec3> surface_below(const Scene& scene, double x, double y) {
  const Vec3 top{x, y, scene.bounds().hi.z + 10.0};
  auto hit = scene.trace(top, Vec3{0, 0, -1});
  if (!hit) return std::nullopt;
  return top + hit->second.t * Vec3{0, 0, -1};
}

bool eye_clear(const Scene& scene, const Vec3& eye, double clearance) {
  for (const auto& o : scene.objects())
    if (inside(o.shape, eye, clearance)) return false;
  return true;
}

Intrinsics intrinsics_for(const ViewSamplingConfig& cfg) { return make_intrinsics(cfg.height, cfg.width, cfg.focal); }

Vec3 eye_direction(double tilt, double azimuth) {
  return {std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth), std::cos(tilt)};
}

/// Draws one candidate; nullopt when it fails a geometric check.
std::optional<CameraView> try_view(const Scene& scene, Rng& rng, double tx, double ty, const ViewSamplingConfig& cfg) {
  auto target = surface_below(scene, tx, ty);
  if (!target) return std::nullopt;
  const double tilt = uniform(rng, 0.0, cfg.max_tilt_deg * kDeg);
  const double az = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double dist = uniform(rng, cfg.min_distance, cfg.max_distance);
  const double roll = uniform(rng, 0.0, 2 * std::numbers::pi);
  const Vec3 eye = *target + dist * eye_direction(tilt, az);
  if (!eye_clear(scene, eye, cfg.min_clearance)) return std::nullopt;
  CameraView v = look_at(eye, *target, Vec3{std::cos(roll), std::sin(roll), 0.0}, intrinsics_for(cfg));
  if (ray_cast(scene, v).coverage() < cfg.min_coverage) return std::nullopt;
  return v;
}

}  // namespace

std::vector<CameraView> sample_random_views(const Scene& scene, int count, std::uint64_t seed,
                                            const ViewSamplingConfig& cfg) {
  if (count < 1) throw ContractViolation("sample_random_views: count must be >= 1");
  const Aabb region = scene.viewing_region();
  std::vector<CameraView> views;
  views.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Rng rng(derive_seed(seed, {0x7e3, static_cast<std::uint64_t>(scene.scene_id()), static_cast<std::uint64_t>(k)}));
    std::optional<CameraView> v;
    for (int a = 0; a < cfg.max_attempts && !v; ++a) {
      const double tx = uniform(rng, region.lo.x, region.hi.x), ty = uniform(rng, region.lo.y, region.hi.y);
      v = try_view(scene, rng, tx, ty, cfg);
    }
    if (!v) throw ConfigError("sample_random_views: coverage constraint not met within the attempt budget");
    views.push_back(*v);
  }
  return views;
}

CameraView sample_view_near(const Scene& scene, const Vec3& anchor, double radius, std::uint64_t seed,
                            const ViewSamplingConfig& cfg) {
  const Aabb region = scene.viewing_region();
  Rng rng(derive_seed(seed, {0x4ea5, static_cast<std::uint64_t>(scene.scene_id())}));
  for (int a = 0; a < cfg.max_attempts; ++a) {
    const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
    const double phi = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double tx = std::clamp(anchor.x + r * std::cos(phi), region.lo.x, region.hi.x);
    const double ty = std::clamp(anchor.y + r * std::sin(phi), region.lo.y, region.hi.y);
    if (auto v = try_view(scene, rng, tx, ty, cfg)) return *v;
  }
  throw ConfigError("sample_view_near: coverage constraint not met within the attempt budget");
}

std::optional<Vec3> look_at_point(const Scene& scene, const CameraView& view) {
  const Vec3 eye = view.center(), f = view.forward();
  auto hit = scene.trace(eye, f);
  if (!hit) return std::nullopt;
  return eye + hit->second.t * f;
}

namespace {

struct Key {
  Vec3 eye, target, up;
};

Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (p2 - p0) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3);
}

std::optional<std::vector<CameraView>> try_pan(const Scene& scene, int length, Rng& rng, const PanConfig& cfg) {
  const ViewSamplingConfig& vc = cfg.view;
  Aabb region = scene.viewing_region();
  const double needed = (length - 1) * cfg.speed;
  const int nkeys = static_cast<int>(std::ceil(needed / cfg.keypoint_spacing * 1.6)) + 4;

  double x = uniform(rng, region.lo.x, region.hi.x), y = uniform(rng, region.lo.y, region.hi.y);
  double heading = uniform(rng, 0.0, 2 * std::numbers::pi);
  double az = uniform(rng, 0.0, 2 * std::numbers::pi);
  double tilt = uniform(rng, 0.0, 0.6 * vc.max_tilt_deg * kDeg);
  double dist = uniform(rng, vc.min_distance, vc.max_distance);
  double roll = uniform(rng, 0.0, 2 * std::numbers::pi);
  std::normal_distribution<double> turn(0.0, 0.35);

  std::vector<Key> keys;
  for (int k = 0; k < nkeys; ++k) {
    auto target = surface_below(scene, x, y);
    if (!target) return std::nullopt;
    const Vec3 eye = *target + dist * eye_direction(tilt, az);
    keys.push_back({eye, *target, Vec3{std::cos(roll), std::sin(roll), 0.0}});

    heading += turn(rng);
    double nx = x + cfg.keypoint_spacing * std::cos(heading), ny = y + cfg.keypoint_spacing * std::sin(heading);
    if (nx < region.lo.x || nx > region.hi.x || ny < region.lo.y || ny > region.hi.y) {
      // turn back toward the region center
      heading = std::atan2(0.5 * (region.lo.y + region.hi.y) - y, 0.5 * (region.lo.x + region.hi.x) - x);
      nx = x + cfg.keypoint_spacing * std::cos(heading);
      ny = y + cfg.keypoint_spacing * std::sin(heading);
    }
    x = nx;
    y = ny;
    az += turn(rng);
    tilt = std::clamp(tilt + 0.3 * turn(rng), 0.0, 0.7 * vc.max_tilt_deg * kDeg);
    dist = std::clamp(dist + 3.0 * turn(rng), vc.min_distance, vc.max_distance);
    roll += 0.3 * turn(rng);
  }

  // Dense samples along the spline, then constant arc-length resampling.
  constexpr int kSub = 64;
  std::vector<Key> dense;
  std::vector<double> arc;
  for (int s = 0; s + 1 < nkeys; ++s) {
    const Key& k0 = keys[static_cast<std::size_t>(std::max(s - 1, 0))];
    const Key& k1 = keys[static_cast<std::size_t>(s)];
    const Key& k2 = keys[static_cast<std::size_t>(s + 1)];
    const Key& k3 = keys[static_cast<std::size_t>(std::min(s + 2, nkeys - 1))];
    for (int j = 0; j < kSub; ++j) {
      const double t = static_cast<double>(j) / kSub;
      dense.push_back({catmull_rom(k0.eye, k1.eye, k2.eye, k3.eye, t),
                       catmull_rom(k0.target, k1.target, k2.target, k3.target, t),
                       catmull_rom(k0.up, k1.up, k2.up, k3.up, t)});
      arc.push_back(dense.size() == 1 ? 0.0 : arc.back() + norm(dense.back().eye - dense[dense.size() - 2].eye));
    }
  }
  if (arc.back() < needed) return std::nullopt;

  const Intrinsics intr = intrinsics_for(vc);
  std::vector<CameraView> frames;
  std::size_t seg = 0;
  for (int f = 0; f < length; ++f) {
    const double s = f * cfg.speed;
    while (seg + 2 < arc.size() && arc[seg + 1] < s) ++seg;
    const double span = arc[seg + 1] - arc[seg];
    const double a = span > 0 ? std::clamp((s - arc[seg]) / span, 0.0, 1.0) : 0.0;
    const Key& p = dense[seg];
    const Key& q = dense[seg + 1];
    const Vec3 eye = p.eye + a * (q.eye - p.eye);
    const Vec3 target = p.target + a * (q.target - p.target);
    const Vec3 up = p.up + a * (q.up - p.up);
    if (!eye_clear(scene, eye, vc.min_clearance)) return std::nullopt;
    CameraView v = look_at(eye, target, up, intr);
    if (!frames.empty()) {
      const CameraView& prev = frames.back();
      if (norm(v.center() - prev.center()) > cfg.max_speed) return std::nullopt;
      const double c = std::clamp(dot(v.forward(), prev.forward()), -1.0, 1.0);
      if (std::acos(c) > cfg.max_angular_deg * kDeg) return std::nullopt;
    }
    if (ray_cast(scene, v).coverage() < vc.min_coverage) return std::nullopt;
    frames.push_back(v);
  }
  return frames;
}

}  // namespace

std::vector<CameraView> make_pan_sequence(const Scene& scene, int length, std::uint64_t seed, const PanConfig& cfg) {
  if (length < 2) throw ContractViolation("make_pan_sequence: length must be >= 2");
  if (cfg.speed > cfg.max_speed) throw ConfigError("make_pan_sequence: speed exceeds max_speed");
  for (int a = 0; a < cfg.view.max_attempts; ++a) {
    Rng rng(derive_seed(seed, {0x9a7, static_cast<std::uint64_t>(scene.scene_id()), static_cast<std::uint64_t>(a)}));
    if (auto frames = try_pan(scene, length, rng, cfg)) return *frames;
  }
  throw ConfigError("make_pan_sequence: no valid camera path within the attempt budget");
}

void save_cameras(const std::filesystem::path& path, const std::vector<CameraView>& views) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& v : views) j.push_back(v);
  write_text(path, j.dump(1) + "\n");
}

std::vector<CameraView> load_cameras(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
  if (!j.is_array()) throw ConfigError(path.string() + ": expected a JSON array of cameras");
  std::vector<CameraView> views;
  for (const auto& e : j) views.push_back(e.get<CameraView>());
  return views;
}

}  // namespace neurtex
