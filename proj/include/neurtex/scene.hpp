// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "neurtex/camera.hpp"
#include "neurtex/image.hpp"
#include "neurtex/vec3.hpp"

namespace neurtex {

struct Sphere {
  Vec3 center;
  double radius = 1.0;
};

/// Axis-aligned ellipsoid.
struct Ellipsoid {
  Vec3 center;
  Vec3 radii{1, 1, 1};
};

/// Gaussian bump of a height field: amplitude * exp(-r^2 / sigma^2).
struct Bump {
  double cx = 0, cy = 0, amplitude = 0, sigma = 1;
};

/// Open sheet z = base_z + sum(bumps) over the rectangle [x0,x1] x [y0,y1].
struct HeightField {
  double x0 = -1, x1 = 1, y0 = -1, y1 = 1;
  double base_z = 0;
  std::vector<Bump> bumps;

  double height(double x, double y) const;
  Vec3 gradient(double x, double y) const;  // (dh/dx, dh/dy, 0)
  double lipschitz() const;                 // bound on |grad h|
  double min_z() const;
  double max_z() const;
};

using Primitive = std::variant<Sphere, Ellipsoid, HeightField>;

struct SceneObject {
  int id = 0;
  std::string name;
  Primitive shape;
  std::uint64_t material_seed = 0;
  Aabb bounds;  // filled by Scene::finalize()
};

struct Hit {
  double t = 0;
  Vec3 normal;  // unit, outward (not yet flipped toward the ray)
};

std::optional<Hit> intersect(const Primitive& shape, const Vec3& origin, const Vec3& dir, double t_min);
Aabb bounding_box(const Primitive& shape);
/// True if p is strictly inside a closed primitive, or below a height field.
bool inside(const Primitive& shape, const Vec3& p, double margin);

class Scene {
 public:
  Scene() = default;
  Scene(int scene_id, std::uint64_t seed, std::vector<SceneObject> objects);

  int scene_id() const { return scene_id_; }
  std::uint64_t seed() const { return seed_; }
  int object_count() const { return static_cast<int>(objects_.size()); }
  const SceneObject& object(int id) const { return objects_.at(static_cast<std::size_t>(id)); }
  const std::vector<SceneObject>& objects() const { return objects_; }
  const Aabb& bounds() const { return bounds_; }

  /// Region over which cameras look: the XY footprint of object 0 shrunk by a margin.
  Aabb viewing_region() const;

  /// Nearest intersection along a ray (object id and hit), or nullopt.
  std::optional<std::pair<int, Hit>> trace(const Vec3& origin, const Vec3& dir) const;

 private:
  int scene_id_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<SceneObject> objects_;
  Aabb bounds_;
};

struct SceneGenConfig {
  int object_count = 5;
  double floor_half_x = 60.0;  // mm
  double floor_half_y = 45.0;
};

/// Procedural abdominal-cavity stand-in: object 0 is a bumpy height-field
/// wall, further objects are organ-like ellipsoids resting on it.
Scene generate_scene(int scene_id, std::uint64_t seed, const SceneGenConfig& cfg = {});

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
void save_scene(const std::filesystem::path& path, const Scene& scene);
Scene load_scene(const std::filesystem::path& path);

constexpr int kMiss = -1;

/// Per-pixel ray-cast results for one view. Row-major, index y * width + x.
struct RayBuffer {
  int height = 0, width = 0;
  std::vector<Vec3> point;      // surface point s, mm
  std::vector<Vec3> normal;     // unit, facing the camera
  std::vector<double> depth;    // camera-space z of s
  std::vector<double> cos_incidence;  // -n . ray_dir, in (0, 1]
  std::vector<int> object;      // object id or kMiss

  RayBuffer() = default;
  RayBuffer(int h, int w);
  std::size_t size() const { return object.size(); }
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  bool hit(std::size_t i) const { return object[i] != kMiss; }
  double coverage() const;
};

/// Nearest hit per pixel (OpenMP over rows).
RayBuffer ray_cast(const Scene& scene, const CameraView& view);
/// Single-threaded reference with identical results.
RayBuffer ray_cast_serial(const Scene& scene, const CameraView& view);

/// Packs a buffer into a float image: s(3), n(3), depth, object id (-1 = miss).
Image pack_ray_buffer(const RayBuffer& buf);
RayBuffer unpack_ray_buffer(const Image& img);

/// Flat per-object color with Lambertian headlight shading; black on misses.
Image render_reference(const Scene& scene, const RayBuffer& buf);

struct PhotorealShading {
  double base = 1.6;        // overall gain before the falloff terms
  double radial_k = 0.6;    // 1 / (1 + k r^2), r normalized by half image width
  double depth_m = 0.012;   // 1 / (1 + m depth), depth in mm
  double ambient = 0.3;     // Lambert floor: ambient + (1 - ambient) cos
};

struct PhotorealMaterial {
  Vec3 tissue;
  Vec3 offset;
  std::uint64_t seed = 0;
};

PhotorealMaterial photoreal_material(const Scene& scene, int object_id);
/// View-independent procedural albedo of a surface point (vessels, mottling).
Vec3 photoreal_albedo(const PhotorealMaterial& material, const Vec3& point);
Vec3 photoreal_albedo(const Scene& scene, int object_id, const Vec3& point);

/// Procedural tissue appearance times a scalar headlight falloff. The falloff
/// is a single multiplier per pixel so hue is view-invariant.
Image render_photoreal(const Scene& scene, const RayBuffer& buf, const CameraView& view,
                       const PhotorealShading& shading = {});

/// Base reference colors, one per object id.
Vec3 reference_color(const Scene& scene, int object_id);

}  // namespace neurtex
