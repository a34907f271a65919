// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "neurtex/vec3.hpp"

namespace neurtex {

struct Intrinsics {
  double fu = 100.0, fv = 100.0;  // focal lengths, pixels
  double u0 = 63.5, v0 = 31.5;    // principal point, pixels
  int width = 128, height = 64;

  bool operator==(const Intrinsics&) const = default;
};

/// Default pinhole for an image of the given size: principal point at the
/// image center, square pixels.
Intrinsics make_intrinsics(int height, int width, double focal);

struct PixelCoord {
  double x = 0, y = 0;
};

/// Pinhole camera. Extrinsics map world to camera space, X_c = R X_w + t,
/// with +z along the viewing direction, +x right and +y down in the image.
/// Pixel (x, y) has its center at continuous coordinate (x, y). World units
/// are millimetres.
struct CameraView {
  Intrinsics intrinsics;
  Mat3 rotation;
  Vec3 translation;

  Vec3 center() const { return -(rotation.transposed() * translation); }
  Vec3 forward() const { return rotation.row(2); }
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

  /// Unit world-space direction of the ray through continuous pixel (x, y).
  Vec3 ray_direction(double x, double y) const;

  /// Perspective projection; nullopt when the point is not in front of the
  /// camera (camera-space z <= 0).
  std::optional<PixelCoord> project(const Vec3& world) const;

  /// Throws ContractViolation if focal lengths, principal point or the
  /// orthonormality of the rotation are out of contract.
  void validate() const;

  bool operator==(const CameraView&) const = default;
};

CameraView look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Intrinsics& intrinsics);

void to_json(nlohmann::json& j, const CameraView& v);
void from_json(const nlohmann::json& j, CameraView& v);

}  // namespace neurtex
