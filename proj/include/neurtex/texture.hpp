// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "neurtex/image.hpp"
#include "neurtex/scene.hpp"

namespace neurtex {

constexpr int kPlanes = 6;

/// Plane order: +x, -x, +y, -y, +z, -z. Plane p has normal sign(p) * e_axis(p).
constexpr int plane_axis(int p) { return p / 2; }
constexpr double plane_sign(int p) { return p % 2 == 0 ? 1.0 : -1.0; }

struct TextureShape {
  int objects = 5, planes = kPlanes, height = 32, width = 32, features = 3;

  std::size_t size() const {
    return static_cast<std::size_t>(objects) * planes * height * width * features;
  }
  std::size_t offset(int o, int p, int i, int j) const {
    return ((((static_cast<std::size_t>(o) * planes + p) * height + i) * width + j) * features);
  }
  bool operator==(const TextureShape&) const = default;
};

/// Learnable O x P x H x W x N feature grid with one axis-aligned texture
/// plane per face of each object's bounding box.
class NeuralTexture {
 public:
  NeuralTexture() = default;
  NeuralTexture(TextureShape shape, std::vector<Aabb> boxes);

  /// Texels i.i.d. uniform in [-amplitude, amplitude].
  static NeuralTexture random(TextureShape shape, std::vector<Aabb> boxes, std::uint64_t seed,
                              float amplitude = 0.05f);
  static NeuralTexture for_scene(const Scene& scene, int height, int width, int features, std::uint64_t seed);

  const TextureShape& shape() const { return shape_; }
  const std::vector<Aabb>& boxes() const { return boxes_; }
  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  float& at(int o, int p, int i, int j, int n) { return values_[shape_.offset(o, p, i, j) + n]; }
  float at(int o, int p, int i, int j, int n) const { return values_[shape_.offset(o, p, i, j) + n]; }

 private:
  TextureShape shape_;
  std::vector<Aabb> boxes_;
  std::vector<float> values_;
};

struct PlaneSample {
  int plane = 0;
  double row = 0, col = 0;  // continuous texel coordinates (x_p along H, y_p along W)
  double weight = 0;        // (n_s . n_p)^2
};

/// The three planes facing the normal (n . n_p > 0; a zero component picks
/// the + plane, whose weight is then zero), ordered x, y, z. Coordinates are
/// the orthographic projection of s onto each plane, in texel units, clamped
/// to the grid.
std::array<PlaneSample, 3> triplanar_coords(const Vec3& s, const Vec3& n, const Aabb& box, int tex_height,
                                            int tex_width);

/// Bilinear read of one plane (H x W x N, row-major) at clamped continuous
/// coordinates. Uses floor/ceil neighbors, so integer coordinates return the
/// texel exactly.
void bilinear_read(std::span<const float> plane, int height, int width, int features, double row, double col,
                   std::span<float> out);

/// One texel contribution to a projected pixel.
struct TexelWeight {
  std::size_t offset;  // index of feature 0 of the texel in the texture tensor
  double weight;
};

/// The 12 (plane, corner) contributions of a pixel, in a fixed order.
std::array<TexelWeight, 12> pixel_support(const TextureShape& shape, const Aabb& box, int object, const Vec3& s,
                                          const Vec3& n);

/// a_tex: H_img x W_img x N feature map, zero on misses.
Image project(const NeuralTexture& tex, const RayBuffer& buf);
Image project_serial(const NeuralTexture& tex, const RayBuffer& buf);

/// Exact transpose of project(., buf): scatter-adds grad_out into a gradient
/// tensor of the texture's shape. `deterministic` forces a fixed reduction
/// order (single pass) regardless of the thread count.
std::vector<float> project_adjoint(const Image& grad_out, const RayBuffer& buf, const NeuralTexture& tex,
                                   bool deterministic = false);
std::vector<float> project_adjoint_serial(const Image& grad_out, const RayBuffer& buf, const NeuralTexture& tex);

/// Texture checkpoint: tag "NTTEX1", u32 O, P, H, W, N, then float32 values.
/// Bounding boxes are not stored; they come from the scene.
void write_texture(const std::filesystem::path& path, const NeuralTexture& tex);
NeuralTexture read_texture(const std::filesystem::path& path, std::vector<Aabb> boxes);

}  // namespace neurtex
