// SPDX-License-Identifier: Apache-2.0
#include "neurtex/texture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "neurtex/binary_io.hpp"
#include "neurtex/errors.hpp"
#include "neurtex/parallel.hpp"
#include "neurtex/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace neurtex {

NeuralTexture::NeuralTexture(TextureShape shape, std::vector<Aabb> boxes)
    : shape_(shape), boxes_(std::move(boxes)), values_(shape.size(), 0.0f) {
  if (shape.planes != kPlanes) throw ConfigError("NeuralTexture: exactly 6 planes are supported");
  if (shape.objects < 1 || shape.height < 1 || shape.width < 1 || shape.features < 1)
    throw ConfigError("NeuralTexture: all dimensions must be >= 1");
  if (static_cast<int>(boxes_.size()) != shape.objects)
    throw ConfigError("NeuralTexture: need one bounding box per object");
}

NeuralTexture NeuralTexture::random(TextureShape shape, std::vector<Aabb> boxes, std::uint64_t seed, float amplitude) {
  NeuralTexture t(shape, std::move(boxes));
  Rng rng(derive_seed(seed, {0x7e77}));
  std::uniform_real_distribution<float> dist(-amplitude, amplitude);
  for (auto& v : t.values_) v = dist(rng);
  return t;
}

NeuralTexture NeuralTexture::for_scene(const Scene& scene, int height, int width, int features, std::uint64_t seed) {
  std::vector<Aabb> boxes;
  for (const auto& o : scene.objects()) boxes.push_back(o.bounds);
  return random({scene.object_count(), kPlanes, height, width, features}, std::move(boxes), seed);
}

namespace {

// In-plane axes (first maps to texel rows, second to columns) for a plane axis.
constexpr std::array<std::array<int, 2>, 3> kPlaneAxes{{{1, 2}, {0, 2}, {0, 1}}};

double to_texel(double v, double lo, double hi, int cells) {
  const double ext = hi - lo;
  const double t = ext > 0 ? (v - lo) / ext * (cells - 1) : 0.0;
  return std::clamp(t, 0.0, static_cast<double>(cells - 1));
}

// Bilinear value of feature k at clamped continuous coordinates, in double.
double bilinear_value(const float* plane, int width, int features, double row, double col, int k) {
  const double r0 = std::floor(row), c0 = std::floor(col);
  const auto i0 = static_cast<std::size_t>(r0), j0 = static_cast<std::size_t>(c0);
  const auto i1 = static_cast<std::size_t>(std::ceil(row)), j1 = static_cast<std::size_t>(std::ceil(col));
  const double dr = row - r0, dc = col - c0;
  const auto w = static_cast<std::size_t>(width), f = static_cast<std::size_t>(features), n = static_cast<std::size_t>(k);
  return (1 - dr) * (1 - dc) * plane[(i0 * w + j0) * f + n] + (1 - dr) * dc * plane[(i0 * w + j1) * f + n] +
         dr * (1 - dc) * plane[(i1 * w + j0) * f + n] + dr * dc * plane[(i1 * w + j1) * f + n];
}

}  // namespace

std::array<PlaneSample, 3> triplanar_coords(const Vec3& s, const Vec3& n, const Aabb& box, int tex_height,
                                            int tex_width) {
  std::array<PlaneSample, 3> out;
  for (int a = 0; a < 3; ++a) {
    const double c = n[a];
    PlaneSample& ps = out[static_cast<std::size_t>(a)];
    ps.plane = c >= 0.0 ? 2 * a : 2 * a + 1;
    ps.weight = c * c;
    const int r = kPlaneAxes[static_cast<std::size_t>(a)][0], q = kPlaneAxes[static_cast<std::size_t>(a)][1];
    ps.row = to_texel(s[r], box.lo[r], box.hi[r], tex_height);
    ps.col = to_texel(s[q], box.lo[q], box.hi[q], tex_width);
  }
  return out;
}

void bilinear_read(std::span<const float> plane, int height, int width, int features, double row, double col,
                   std::span<float> out) {
  row = std::clamp(row, 0.0, static_cast<double>(height - 1));
  col = std::clamp(col, 0.0, static_cast<double>(width - 1));
  for (int k = 0; k < features; ++k)
    out[static_cast<std::size_t>(k)] = static_cast<float>(bilinear_value(plane.data(), width, features, row, col, k));
}

std::array<TexelWeight, 12> pixel_support(const TextureShape& shape, const Aabb& box, int object, const Vec3& s,
                                          const Vec3& n) {
  std::array<TexelWeight, 12> out{};
  const auto planes = triplanar_coords(s, n, box, shape.height, shape.width);
  std::size_t k = 0;
  for (const auto& ps : planes) {
    const double r0 = std::floor(ps.row), c0 = std::floor(ps.col);
    const int i0 = static_cast<int>(r0), j0 = static_cast<int>(c0);
    const int i1 = static_cast<int>(std::ceil(ps.row)), j1 = static_cast<int>(std::ceil(ps.col));
    const double dr = ps.row - r0, dc = ps.col - c0;
    out[k++] = {shape.offset(object, ps.plane, i0, j0), ps.weight * ((1 - dr) * (1 - dc))};
    out[k++] = {shape.offset(object, ps.plane, i0, j1), ps.weight * ((1 - dr) * dc)};
    out[k++] = {shape.offset(object, ps.plane, i1, j0), ps.weight * (dr * (1 - dc))};
    out[k++] = {shape.offset(object, ps.plane, i1, j1), ps.weight * (dr * dc)};
  }
  return out;
}

namespace {

void check_compatible(const NeuralTexture& tex, const RayBuffer& buf) {
  const int objects = tex.shape().objects;
  for (int o : buf.object)
    if (o != kMiss && (o < 0 || o >= objects))
      throw ContractViolation("project: object id " + std::to_string(o) + " outside 0.." + std::to_string(objects - 1));
}

void project_pixel(const NeuralTexture& tex, const RayBuffer& buf, std::size_t i, float* out) {
  const auto& shape = tex.shape();
  const int o = buf.object[i];
  if (o == kMiss) return;
  const auto planes = triplanar_coords(buf.point[i], buf.normal[i], tex.boxes()[static_cast<std::size_t>(o)],
                                       shape.height, shape.width);
  const float* values = tex.values().data();
  for (int n = 0; n < shape.features; ++n) {
    double acc = 0.0;
    for (const auto& ps : planes)
      acc += ps.weight * bilinear_value(values + shape.offset(o, ps.plane, 0, 0), shape.width, shape.features, ps.row,
                                        ps.col, n);
    out[n] = static_cast<float>(acc);
  }
}

}  // namespace

Image project(const NeuralTexture& tex, const RayBuffer& buf) {
  check_compatible(tex, buf);
  const int nf = tex.shape().features;
  Image out(buf.height, buf.width, nf);
  const auto n = static_cast<std::ptrdiff_t>(buf.size());
  float* dst = out.data().data();
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t i = 0; i < n; ++i)
    project_pixel(tex, buf, static_cast<std::size_t>(i), dst + i * nf);
  return out;
}

Image project_serial(const NeuralTexture& tex, const RayBuffer& buf) {
  check_compatible(tex, buf);
  const int nf = tex.shape().features;
  Image out(buf.height, buf.width, nf);
  for (std::size_t i = 0; i < buf.size(); ++i) project_pixel(tex, buf, i, out.data().data() + i * nf);
  return out;
}

namespace {

void scatter_pixel(const NeuralTexture& tex, const RayBuffer& buf, const Image& grad_out, std::size_t i, double* acc) {
  const int o = buf.object[i];
  if (o == kMiss) return;
  const auto& shape = tex.shape();
  const auto support =
      pixel_support(shape, tex.boxes()[static_cast<std::size_t>(o)], o, buf.point[i], buf.normal[i]);
  const float* g = grad_out.data().data() + i * static_cast<std::size_t>(shape.features);
  for (const auto& tw : support) {
    if (tw.weight == 0.0) continue;
    for (int n = 0; n < shape.features; ++n) acc[tw.offset + static_cast<std::size_t>(n)] += tw.weight * g[n];
  }
}

void check_grad(const Image& grad_out, const RayBuffer& buf, const NeuralTexture& tex) {
  if (grad_out.height() != buf.height || grad_out.width() != buf.width || grad_out.channels() != tex.shape().features)
    throw ContractViolation("project_adjoint: gradient shape does not match the projection");
  check_compatible(tex, buf);
}

}  // namespace

std::vector<float> project_adjoint_serial(const Image& grad_out, const RayBuffer& buf, const NeuralTexture& tex) {
  check_grad(grad_out, buf, tex);
  std::vector<double> acc(tex.shape().size(), 0.0);
  for (std::size_t i = 0; i < buf.size(); ++i) scatter_pixel(tex, buf, grad_out, i, acc.data());
  return {acc.begin(), acc.end()};
}

std::vector<float> project_adjoint(const Image& grad_out, const RayBuffer& buf, const NeuralTexture& tex,
                                   bool deterministic) {
  const int threads = thread_count();
  if (deterministic || threads == 1) return project_adjoint_serial(grad_out, buf, tex);
  check_grad(grad_out, buf, tex);
  const std::size_t size = tex.shape().size();
  // Privatized accumulation, reduced in thread order.
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(threads));
  const auto n = static_cast<std::ptrdiff_t>(buf.size());
#pragma omp parallel num_threads(threads)
  {
#ifdef _OPENMP
    const auto tid = static_cast<std::size_t>(omp_get_thread_num());
#else
    const std::size_t tid = 0;
#endif
    auto& mine = partial[tid];
    mine.assign(size, 0.0);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) scatter_pixel(tex, buf, grad_out, static_cast<std::size_t>(i), mine.data());
  }
  std::vector<float> out(size, 0.0f);
  for (std::size_t k = 0; k < size; ++k) {
    double s = 0.0;
    for (const auto& p : partial)
      if (!p.empty()) s += p[k];
    out[k] = static_cast<float>(s);
  }
  return out;
}

void write_texture(const std::filesystem::path& path, const NeuralTexture& tex) {
  auto os = open_out(path);
  write_magic(os, "NTTEX1");
  const auto& s = tex.shape();
  for (int d : {s.objects, s.planes, s.height, s.width, s.features}) write_u32(os, static_cast<std::uint32_t>(d));
  write_f32(os, tex.values());
  if (!os) throw IoError(path.string() + ": write failed");
}

NeuralTexture read_texture(const std::filesystem::path& path, std::vector<Aabb> boxes) {
  auto is = open_in(path);
  expect_magic(is, "NTTEX1", path);
  TextureShape s;
  s.objects = static_cast<int>(read_u32(is, path));
  s.planes = static_cast<int>(read_u32(is, path));
  s.height = static_cast<int>(read_u32(is, path));
  s.width = static_cast<int>(read_u32(is, path));
  s.features = static_cast<int>(read_u32(is, path));
  if (s.objects > 4096 || s.height > 8192 || s.width > 8192 || s.features > 4096)
    throw IoError(path.string() + ": implausible texture header");
  NeuralTexture t(s, std::move(boxes));
  read_f32(is, t.values(), path);
  return t;
}

}  // namespace neurtex
