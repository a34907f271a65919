// SPDX-License-Identifier: Apache-2.0
#include "neurtex/warp.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include "neurtex/binary_io.hpp"
#include "neurtex/errors.hpp"
#include "neurtex/parallel.hpp"

namespace neurtex {

std::size_t WarpMap::match_count() const {
  return static_cast<std::size_t>(std::count_if(winner.begin(), winner.end(), [](auto w) { return w >= 0; }));
}

std::optional<PixelCoord> reproject(const Vec3& s, const CameraView& view_i) { return view_i.project(s); }

namespace {

// Pixel centers on the first row/column may reproject a rounding error below 0.
constexpr double kEdgeTol = 1e-6;

bool in_frame(const PixelCoord& p, int height, int width) {
  return p.x >= -kEdgeTol && p.x < width - 0.5 && p.y >= -kEdgeTol && p.y < height - 0.5;
}

std::size_t nearest_index(const PixelCoord& p, int width) {
  const auto xi = static_cast<std::size_t>(std::lround(p.x));
  const auto yi = static_cast<std::size_t>(std::lround(p.y));
  return yi * static_cast<std::size_t>(width) + xi;
}

struct SourceResult {
  bool valid = false;
  float x = 0, y = 0;
  double depth = 0;
  std::size_t target = 0;
};

SourceResult map_source_pixel(std::size_t src, const CameraView& view_i, const RayBuffer& buf_i, const RayBuffer& buf_j,
                              double eps) {
  SourceResult r;
  if (!buf_j.hit(src)) return r;
  const Vec3& s = buf_j.point[src];
  const Vec3 sc = view_i.to_camera(s);
  if (!(sc.z > 0.0)) return r;
  const PixelCoord p{view_i.intrinsics.fu * sc.x / sc.z + view_i.intrinsics.u0,
                     view_i.intrinsics.fv * sc.y / sc.z + view_i.intrinsics.v0};
  r.x = static_cast<float>(p.x);
  r.y = static_cast<float>(p.y);
  r.depth = sc.z;
  if (!in_frame(p, buf_i.height, buf_i.width)) return r;
  r.x = std::max(r.x, 0.0f);
  r.y = std::max(r.y, 0.0f);
  const std::size_t t = nearest_index(p, buf_i.width);
  if (!buf_i.hit(t)) return r;
  const double seen = buf_i.depth[t];
  if (sc.z > seen + eps) return r;  // occluded
  if (sc.z < seen - eps) return r;  // silhouette: the target pixel sees a surface far behind s
  r.valid = true;
  r.target = t;
  return r;
}

WarpMap allocate(const RayBuffer& buf_i, const RayBuffer& buf_j) {
  WarpMap m;
  m.src_height = buf_j.height;
  m.src_width = buf_j.width;
  m.dst_height = buf_i.height;
  m.dst_width = buf_i.width;
  const std::size_t n = buf_j.size();
  m.x.assign(n, 0.0f);
  m.y.assign(n, 0.0f);
  m.valid.assign(n, 0);
  m.target_depth.assign(n, 0.0);
  m.winner.assign(buf_i.size(), -1);
  return m;
}

// Orders (depth, source index) so that an unsigned min picks the nearer
// splat and breaks ties by index. Depths are positive floats, whose bit
// patterns sort like their values.
std::uint64_t splat_key(double depth, std::size_t src) {
  const auto d = std::bit_cast<std::uint32_t>(static_cast<float>(depth));
  return (static_cast<std::uint64_t>(d) << 32) | static_cast<std::uint32_t>(src);
}

}  // namespace

bool occluded(const Vec3& s, const CameraView& view_i, const RayBuffer& buf_i, double eps) {
  const Vec3 sc = view_i.to_camera(s);
  if (!(sc.z > 0.0)) throw ContractViolation("occluded: point is behind the camera");
  const PixelCoord p{view_i.intrinsics.fu * sc.x / sc.z + view_i.intrinsics.u0,
                     view_i.intrinsics.fv * sc.y / sc.z + view_i.intrinsics.v0};
  if (!in_frame(p, buf_i.height, buf_i.width)) throw ContractViolation("occluded: point projects outside the frame");
  const std::size_t t = nearest_index(p, buf_i.width);
  if (!buf_i.hit(t)) return true;
  return sc.z > buf_i.depth[t] + eps;
}

WarpMap build_warp(const CameraView& view_i, const RayBuffer& buf_i, const CameraView& view_j, const RayBuffer& buf_j,
                   double eps) {
  view_i.validate();
  view_j.validate();
  WarpMap m = allocate(buf_i, buf_j);
  const auto n = static_cast<std::ptrdiff_t>(buf_j.size());
  std::vector<std::uint64_t> best(buf_i.size(), std::numeric_limits<std::uint64_t>::max());

#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto src = static_cast<std::size_t>(k);
    const SourceResult r = map_source_pixel(src, view_i, buf_i, buf_j, eps);
    m.x[src] = r.x;
    m.y[src] = r.y;
    m.target_depth[src] = r.depth;
    m.valid[src] = r.valid ? 1 : 0;
    if (!r.valid) continue;
    std::atomic_ref<std::uint64_t> slot(best[r.target]);
    const std::uint64_t key = splat_key(r.depth, src);
    std::uint64_t cur = slot.load(std::memory_order_relaxed);
    while (key < cur && !slot.compare_exchange_weak(cur, key, std::memory_order_relaxed)) {
    }
  }
  for (std::size_t t = 0; t < best.size(); ++t)
    if (best[t] != std::numeric_limits<std::uint64_t>::max())
      m.winner[t] = static_cast<std::int32_t>(best[t] & 0xffffffffu);
  return m;
}

WarpMap build_warp_serial(const CameraView& view_i, const RayBuffer& buf_i, const CameraView& view_j,
                          const RayBuffer& buf_j, double eps) {
  view_i.validate();
  view_j.validate();
  WarpMap m = allocate(buf_i, buf_j);
  std::vector<double> best_depth(buf_i.size(), std::numeric_limits<double>::infinity());
  for (std::size_t src = 0; src < buf_j.size(); ++src) {
    const SourceResult r = map_source_pixel(src, view_i, buf_i, buf_j, eps);
    m.x[src] = r.x;
    m.y[src] = r.y;
    m.target_depth[src] = r.depth;
    m.valid[src] = r.valid ? 1 : 0;
    if (!r.valid) continue;
    // Same ordering as splat_key: depth compared at float precision, first index wins ties.
    const double d = static_cast<float>(r.depth);
    if (d < best_depth[r.target]) {
      best_depth[r.target] = d;
      m.winner[r.target] = static_cast<std::int32_t>(src);
    }
  }
  return m;
}

Image warp_image(const Image& img_j, const WarpMap& map) {
  if (img_j.height() != map.src_height || img_j.width() != map.src_width)
    throw ContractViolation("warp_image: image does not match the warp source size");
  Image out(map.dst_height, map.dst_width, img_j.channels());
  const int c = img_j.channels();
  const auto n = static_cast<std::ptrdiff_t>(map.winner.size());
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const auto w = map.winner[static_cast<std::size_t>(t)];
    if (w < 0) continue;
    const float* src = img_j.data().data() + static_cast<std::size_t>(w) * c;
    float* dst = out.data().data() + static_cast<std::size_t>(t) * c;
    std::copy(src, src + c, dst);
  }
  return out;
}

void write_warp(const std::filesystem::path& path, const WarpMap& map) {
  auto os = open_out(path);
  write_magic(os, "NTWRP1");
  write_u32(os, static_cast<std::uint32_t>(map.src_height));
  write_u32(os, static_cast<std::uint32_t>(map.src_width));
  std::vector<float> triples;
  triples.reserve(map.x.size() * 3);
  for (std::size_t i = 0; i < map.x.size(); ++i) {
    triples.push_back(map.x[i]);
    triples.push_back(map.y[i]);
    triples.push_back(map.valid[i] ? 1.0f : 0.0f);
  }
  write_f32(os, triples);
  if (!os) throw IoError(path.string() + ": write failed");
}

WarpMap read_warp(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "NTWRP1", path);
  WarpMap m;
  m.src_height = static_cast<int>(read_u32(is, path));
  m.src_width = static_cast<int>(read_u32(is, path));
  const std::size_t n = static_cast<std::size_t>(m.src_height) * m.src_width;
  std::vector<float> triples(n * 3);
  read_f32(is, triples, path);
  m.x.resize(n);
  m.y.resize(n);
  m.valid.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.x[i] = triples[3 * i];
    m.y[i] = triples[3 * i + 1];
    m.valid[i] = triples[3 * i + 2] != 0.0f ? 1 : 0;
  }
  return m;
}

}  // namespace neurtex
