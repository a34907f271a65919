// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "neurtex/camera.hpp"
#include "neurtex/image.hpp"
#include "neurtex/scene.hpp"

namespace neurtex {

/// Per-pixel displacement (pixels) from frame t to frame t+1, HWC with 2
/// channels (dx, dy), and a validity mask.
struct FlowField {
  Image flow;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int height, int width) : flow(height, width, 2), valid(static_cast<std::size_t>(height) * width, 0) {}
  int height() const { return flow.height(); }
  int width() const { return flow.width(); }
};

/// Reprojects the surface point of every view_t pixel into view_t1. Invalid
/// on misses and wherever the warp occlusion test rejects the point.
FlowField ground_truth_flow(const CameraView& view_t, const RayBuffer& buf_t, const CameraView& view_t1,
                            const RayBuffer& buf_t1, double eps = 1.0);
FlowField ground_truth_flow(const Scene& scene, const CameraView& view_t, const CameraView& view_t1, double eps = 1.0);

/// Visualization: hue encodes direction, saturation the magnitude relative to
/// max_magnitude; invalid pixels are black.
Image flow_to_color(const FlowField& f, double max_magnitude);

}  // namespace neurtex
