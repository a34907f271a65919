// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "neurtex/camera.hpp"
#include "neurtex/image.hpp"
#include "neurtex/scene.hpp"

namespace neurtex {

constexpr double kDefaultOcclusionEps = 1.0;  // mm

/// Forward correspondence from every pixel of a source view j into the pixel
/// space of a target view i.
struct WarpMap {
  int src_height = 0, src_width = 0;
  int dst_height = 0, dst_width = 0;
  std::vector<float> x, y;             // continuous target coordinates, per source pixel
  std::vector<std::uint8_t> valid;     // hit, in frame, visible in the target
  std::vector<double> target_depth;    // camera-space z of the source point in view i
  std::vector<std::int32_t> winner;    // per target pixel: source index that splats there, or -1

  /// Number of target pixels receiving a splat (the match set M).
  std::size_t match_count() const;
  bool matched(std::size_t dst_index) const { return winner[dst_index] >= 0; }
};

/// Pinhole projection of a world point into view i; nullopt behind the camera.
std::optional<PixelCoord> reproject(const Vec3& s, const CameraView& view_i);

/// Depth test against the target buffer at the nearest pixel: s is occluded
/// when it lies more than eps behind the surface recorded there. A target
/// pixel that hit nothing cannot confirm visibility and counts as occluded.
/// Throws ContractViolation if s does not project into the frame.
bool occluded(const Vec3& s, const CameraView& view_i, const RayBuffer& buf_i, double eps);

/// Valid iff the source pixel hits geometry, reprojects in front of camera i
/// inside [0, W-0.5) x [0, H-0.5), is not occluded, and the surface seen at
/// the target pixel is not more than eps behind it (silhouette guard).
/// Collisions resolve to the smaller target depth, then the lower source index.
WarpMap build_warp(const CameraView& view_i, const RayBuffer& buf_i, const CameraView& view_j, const RayBuffer& buf_j,
                   double eps = kDefaultOcclusionEps);
WarpMap build_warp_serial(const CameraView& view_i, const RayBuffer& buf_i, const CameraView& view_j,
                          const RayBuffer& buf_j, double eps = kDefaultOcclusionEps);

/// Forward splat of a view-j image into view-i space; zero where nothing lands.
Image warp_image(const Image& img_j, const WarpMap& map);

/// Debug export: tag "NTWRP1", u32 H, u32 W of the source, then per source
/// pixel float32 (x_i, y_i, valid).
void write_warp(const std::filesystem::path& path, const WarpMap& map);
WarpMap read_warp(const std::filesystem::path& path);

}  // namespace neurtex
