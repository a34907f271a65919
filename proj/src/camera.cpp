// SPDX-License-Identifier: Apache-2.0
#include "neurtex/camera.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "neurtex/errors.hpp"

namespace neurtex {

Intrinsics make_intrinsics(int height, int width, double focal) {
  Intrinsics k;
  k.fu = k.fv = focal;
  k.width = width;
  k.height = height;
  k.u0 = (width - 1) * 0.5;
  k.v0 = (height - 1) * 0.5;
  return k;
}

Vec3 CameraView::ray_direction(double x, double y) const {
  const Vec3 dc{(x - intrinsics.u0) / intrinsics.fu, (y - intrinsics.v0) / intrinsics.fv, 1.0};
  return normalize(rotation.transposed() * dc);
}

std::optional<PixelCoord> CameraView::project(const Vec3& world) const {
  const Vec3 c = to_camera(world);
  if (!(c.z > 0.0)) return std::nullopt;
  return PixelCoord{intrinsics.fu * c.x / c.z + intrinsics.u0, intrinsics.fv * c.y / c.z + intrinsics.v0};
}

void CameraView::validate() const {
  const auto& k = intrinsics;
  if (!(k.fu > 0 && k.fv > 0)) throw ContractViolation("CameraView: focal lengths must be positive");
  if (k.width <= 0 || k.height <= 0) throw ContractViolation("CameraView: image size must be positive");
  if (!(k.u0 >= 0 && k.u0 < k.width && k.v0 >= 0 && k.v0 < k.height))
    throw ContractViolation("CameraView: principal point outside the image");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const double d = dot(rotation.row(r), rotation.row(c)) - (r == c ? 1.0 : 0.0);
      if (std::abs(d) > 1e-6) throw ContractViolation("CameraView: rotation is not orthonormal");
    }
}

CameraView look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Intrinsics& intrinsics) {
  const Vec3 f = normalize(target - eye);
  Vec3 right = cross(f, up);
  if (norm(right) < 1e-9) right = cross(f, Vec3{0, 1, 0});
  if (norm(right) < 1e-9) right = cross(f, Vec3{1, 0, 0});
  right = normalize(right);
  // Image +y points down, so the camera "down" axis completes a right-handed frame.
  const Vec3 down = cross(f, right);
  CameraView v;
  v.intrinsics = intrinsics;
  for (int c = 0; c < 3; ++c) {
    v.rotation(0, c) = right[c];
    v.rotation(1, c) = down[c];
    v.rotation(2, c) = f[c];
  }
  v.translation = -(v.rotation * eye);
  return v;
}

void to_json(nlohmann::json& j, const CameraView& v) {
  const auto& k = v.intrinsics;
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rot.push_back({v.rotation(r, 0), v.rotation(r, 1), v.rotation(r, 2)});
  j = nlohmann::json{
      {"intrinsics", {{"fu", k.fu}, {"fv", k.fv}, {"u0", k.u0}, {"v0", k.v0}, {"width", k.width}, {"height", k.height}}},
      {"extrinsics", {{"R", rot}, {"t", {v.translation.x, v.translation.y, v.translation.z}}}}};
}

void from_json(const nlohmann::json& j, CameraView& v) {
  try {
    const auto& k = j.at("intrinsics");
    v.intrinsics.fu = k.at("fu").get<double>();
    v.intrinsics.fv = k.at("fv").get<double>();
    v.intrinsics.u0 = k.at("u0").get<double>();
    v.intrinsics.v0 = k.at("v0").get<double>();
    v.intrinsics.width = k.at("width").get<int>();
    v.intrinsics.height = k.at("height").get<int>();
    const auto& e = j.at("extrinsics");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) v.rotation(r, c) = e.at("R").at(r).at(c).get<double>();
    for (int i = 0; i < 3; ++i) v.translation[i] = e.at("t").at(i).get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("camera record: ") + ex.what());
  }
  v.validate();
}

}  // namespace neurtex
