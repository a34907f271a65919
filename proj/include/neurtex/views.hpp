// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "neurtex/camera.hpp"
#include "neurtex/scene.hpp"

namespace neurtex {

/// Camera placement for training views. The original view distribution is
/// unknown; these are desk-scale choices.
struct ViewSamplingConfig {
  int height = 64, width = 128;
  double focal = 100.0;           // pixels
  double min_distance = 38.0;     // mm from the look-at point
  double max_distance = 58.0;
  double max_tilt_deg = 35.0;     // angle of the viewing axis from straight down
  double min_coverage = 0.5;      // fraction of non-miss pixels
  double min_clearance = 4.0;     // mm between the eye and any surface
  int max_attempts = 200;         // per emitted view
};

/// Deterministic per seed; every view sees at least min_coverage geometry.
/// Throws ConfigError when the resampling budget is exhausted.
std::vector<CameraView> sample_random_views(const Scene& scene, int count, std::uint64_t seed,
                                            const ViewSamplingConfig& cfg = {});

/// One view whose look-at point lies within `radius` mm (in XY) of `anchor`.
CameraView sample_view_near(const Scene& scene, const Vec3& anchor, double radius, std::uint64_t seed,
                            const ViewSamplingConfig& cfg = {});

/// Point on the scene surface that the view's optical axis hits.
std::optional<Vec3> look_at_point(const Scene& scene, const CameraView& view);

struct PanConfig {
  ViewSamplingConfig view;
  double speed = 0.6;              // mm of camera travel per frame
  double max_speed = 1.0;          // v_max, mm per frame
  double max_angular_deg = 1.5;    // per frame
  double keypoint_spacing = 14.0;  // mm between spline keypoints
};

/// Smooth pan: Catmull-Rom spline through random keypoints, resampled at
/// constant arc length so per-frame travel is bounded by max_speed.
std::vector<CameraView> make_pan_sequence(const Scene& scene, int length, std::uint64_t seed,
                                          const PanConfig& cfg = {});

void save_cameras(const std::filesystem::path& path, const std::vector<CameraView>& views);
std::vector<CameraView> load_cameras(const std::filesystem::path& path);

}  // namespace neurtex
