// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <variant>

namespace oracle {

using namespace neurtex;

void pixel_ray(const CameraView& v, double x, double y, Vec3& origin, Vec3& dir) {
  const auto& k = v.intrinsics;
  const double cx = (x - k.u0) / k.fu, cy = (y - k.v0) / k.fv;
  const auto& R = v.rotation;
  // R^T * (cx, cy, 1)
  Vec3 d{R(0, 0) * cx + R(1, 0) * cy + R(2, 0), R(0, 1) * cx + R(1, 1) * cy + R(2, 1),
         R(0, 2) * cx + R(1, 2) * cy + R(2, 2)};
  dir = d / std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
  const auto& t = v.translation;
  origin = Vec3{-(R(0, 0) * t.x + R(1, 0) * t.y + R(2, 0) * t.z), -(R(0, 1) * t.x + R(1, 1) * t.y + R(2, 1) * t.z),
                -(R(0, 2) * t.x + R(1, 2) * t.y + R(2, 2) * t.z)};
}

namespace {

constexpr double kNone = std::numeric_limits<double>::infinity();

double unit_sphere_t(const Vec3& o, const Vec3& d) {
  // |o + t d|^2 = 1, d not normalized.
  const double a = d.x * d.x + d.y * d.y + d.z * d.z;
  const double b = 2 * (o.x * d.x + o.y * d.y + o.z * d.z);
  const double c = o.x * o.x + o.y * o.y + o.z * o.z - 1;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return kNone;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2 * a), t1 = (-b + sq) / (2 * a);
  if (t0 > 1e-9) return t0;
  if (t1 > 1e-9) return t1;
  return kNone;
}

double ellipsoid_t(const Vec3& c, const Vec3& r, const Vec3& o, const Vec3& d) {
  const Vec3 os{(o.x - c.x) / r.x, (o.y - c.y) / r.y, (o.z - c.z) / r.z};
  const Vec3 ds{d.x / r.x, d.y / r.y, d.z / r.z};
  return unit_sphere_t(os, ds);
}

double field_t(const HeightField& h, const Vec3& o, const Vec3& d) {
  auto g = [&](double t) {
    const double x = o.x + t * d.x, y = o.y + t * d.y, z = o.z + t * d.z;
    double hz = h.base_z;
    for (const auto& b : h.bumps) {
      const double dx = x - b.cx, dy = y - b.cy;
      hz += b.amplitude * std::exp(-(dx * dx + dy * dy) / (b.sigma * b.sigma));
    }
    return z - hz;
  };
  auto inside_rect = [&](double t) {
    const double x = o.x + t * d.x, y = o.y + t * d.y;
    return x >= h.x0 && x <= h.x1 && y >= h.y0 && y <= h.y1;
  };
  const double step = 0.02;
  const double t_end = 400.0;
  double prev = g(0.0);
  for (double t = step; t < t_end; t += step) {
    const double cur = g(t);
    if ((prev > 0) != (cur > 0)) {
      double lo = t - step, hi = t;
      for (int k = 0; k < 80; ++k) {
        const double mid = 0.5 * (lo + hi);
        if ((g(mid) > 0) == (prev > 0)) lo = mid; else hi = mid;
      }
      const double root = 0.5 * (lo + hi);
      if (inside_rect(root)) return root;
    }
    prev = cur;
  }
  return kNone;
}

}  // namespace

RayHit brute_force_trace(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  RayHit best;
  double best_t = kNone;
  for (const auto& obj : scene.objects()) {
    double t = kNone;
    if (const auto* s = std::get_if<Sphere>(&obj.shape))
      t = ellipsoid_t(s->center, Vec3{s->radius, s->radius, s->radius}, origin, dir);
    else if (const auto* e = std::get_if<Ellipsoid>(&obj.shape))
      t = ellipsoid_t(e->center, e->radii, origin, dir);
    else if (const auto* h = std::get_if<HeightField>(&obj.shape))
      t = field_t(*h, origin, dir);
    if (t < best_t) {
      best_t = t;
      best.object = obj.id;
    }
  }
  if (best.object != kMiss) {
    best.t = best_t;
    best.point = origin + dir * best_t;
  }
  return best;
}

Image project(const NeuralTexture& tex, const RayBuffer& buf) {
  const auto& sh = tex.shape();
  Image out(buf.height, buf.width, sh.features);
  const auto vals = tex.values();
  for (int y = 0; y < buf.height; ++y)
    for (int x = 0; x < buf.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * buf.width + x;
      const int o = buf.object[i];
      if (o < 0) continue;
      const Vec3 s = buf.point[i], n = buf.normal[i];
      const Aabb& box = tex.boxes()[o];
      // plane axis -> the two in-plane world axes (rows, cols)
      const int rows_axis[3] = {1, 0, 0};
      const int cols_axis[3] = {2, 2, 1};
      for (int f = 0; f < sh.features; ++f) {
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) {
          const int plane = n[a] >= 0.0 ? 2 * a : 2 * a + 1;
          const double w = n[a] * n[a];
          const int ra = rows_axis[a], ca = cols_axis[a];
          double xp = 0, yp = 0;
          if (box.hi[ra] - box.lo[ra] > 0) xp = (s[ra] - box.lo[ra]) / (box.hi[ra] - box.lo[ra]) * (sh.height - 1);
          if (box.hi[ca] - box.lo[ca] > 0) yp = (s[ca] - box.lo[ca]) / (box.hi[ca] - box.lo[ca]) * (sh.width - 1);
          xp = std::min(std::max(xp, 0.0), double(sh.height - 1));
          yp = std::min(std::max(yp, 0.0), double(sh.width - 1));
          const double fx = std::floor(xp), fy = std::floor(yp);
          const double dx = xp - fx, dy = yp - fy;
          auto T = [&](double r, double c) {
            return vals[sh.offset(o, plane, int(r), int(c)) + f];
          };
          const double bil = (1 - dx) * (1 - dy) * T(fx, fy) + (1 - dx) * dy * T(fx, std::ceil(yp)) +
                             dx * (1 - dy) * T(std::ceil(xp), fy) + dx * dy * T(std::ceil(xp), std::ceil(yp));
          acc += w * bil;
        }
        out.at(y, x, f) = static_cast<float>(acc);
      }
    }
  return out;
}

std::vector<long> warp_targets(const CameraView& vi, const RayBuffer& bi, const CameraView&, const RayBuffer& bj,
                               double eps) {
  std::vector<long> out(bj.size(), -1);
  const auto& k = vi.intrinsics;
  for (std::size_t q = 0; q < bj.size(); ++q) {
    if (bj.object[q] < 0) continue;
    const Vec3 s = bj.point[q];
    const auto& R = vi.rotation;
    const double X = R(0, 0) * s.x + R(0, 1) * s.y + R(0, 2) * s.z + vi.translation.x;
    const double Y = R(1, 0) * s.x + R(1, 1) * s.y + R(1, 2) * s.z + vi.translation.y;
    const double Z = R(2, 0) * s.x + R(2, 1) * s.y + R(2, 2) * s.z + vi.translation.z;
    if (Z <= 0) continue;
    const double u = k.fu * X / Z + k.u0, v = k.fv * Y / Z + k.v0;
    if (!(u >= -1e-6 && u < k.width - 0.5 && v >= -1e-6 && v < k.height - 0.5)) continue;
    const long px = std::lround(u), py = std::lround(v);
    const std::size_t p = static_cast<std::size_t>(py) * k.width + px;
    if (bi.object[p] < 0) continue;
    if (Z > bi.depth[p] + eps || Z < bi.depth[p] - eps) continue;
    out[q] = static_cast<long>(p);
  }
  return out;
}

std::size_t match_count(const std::vector<long>& targets) {
  std::set<long> s;
  for (long t : targets)
    if (t >= 0) s.insert(t);
  return s.size();
}

Image render_reference(const Scene& scene, const RayBuffer& buf) {
  Image img(buf.height, buf.width, 3);
  for (int y = 0; y < buf.height; ++y)
    for (int x = 0; x < buf.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * buf.width + x;
      if (buf.object[i] < 0) continue;
      const Vec3 c = reference_color(scene, buf.object[i]);
      const double shade = 0.25 + 0.75 * buf.cos_incidence[i];
      img.at(y, x, 0) = static_cast<float>(c.x * shade);
      img.at(y, x, 1) = static_cast<float>(c.y * shade);
      img.at(y, x, 2) = static_cast<float>(c.z * shade);
    }
  return img;
}

}  // namespace oracle

namespace oracle {

double ms_ssim(const std::vector<double>& x0, const std::vector<double>& y0, int height, int width, int scales) {
  const double weights_all[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double wsum = 0;
  for (int l = 0; l < scales; ++l) wsum += weights_all[l];
  double win[11][11];
  {
    double g[11], t = 0;
    for (int i = 0; i < 11; ++i) {
      g[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2 * 1.5 * 1.5));
      t += g[i];
    }
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) win[i][j] = g[i] / t * g[j] / t;
  }
  const double C1 = 0.02 * 0.02, C2 = 0.06 * 0.06;
  std::vector<double> x = x0, y = y0;
  int h = height, w = width;
  double result = 1.0;
  for (int l = 0; l < scales; ++l) {
    if (l > 0) {
      const int nh = h / 2, nw = w / 2;
      std::vector<double> xs(static_cast<std::size_t>(nh) * nw), ys(xs.size());
      for (int i = 0; i < nh; ++i)
        for (int j = 0; j < nw; ++j) {
          auto at = [&](const std::vector<double>& v, int a, int b) { return v[static_cast<std::size_t>(a) * w + b]; };
          xs[static_cast<std::size_t>(i) * nw + j] =
              0.25 * (at(x, 2 * i, 2 * j) + at(x, 2 * i, 2 * j + 1) + at(x, 2 * i + 1, 2 * j) + at(x, 2 * i + 1, 2 * j + 1));
          ys[static_cast<std::size_t>(i) * nw + j] =
              0.25 * (at(y, 2 * i, 2 * j) + at(y, 2 * i, 2 * j + 1) + at(y, 2 * i + 1, 2 * j) + at(y, 2 * i + 1, 2 * j + 1));
        }
      x = xs;
      y = ys;
      h = nh;
      w = nw;
    }
    double cs_sum = 0, ssim_sum = 0;
    int count = 0;
    for (int i = 0; i + 11 <= h; ++i)
      for (int j = 0; j + 11 <= w; ++j) {
        double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int a = 0; a < 11; ++a)
          for (int b = 0; b < 11; ++b) {
            const double xv = x[static_cast<std::size_t>(i + a) * w + j + b];
            const double yv = y[static_cast<std::size_t>(i + a) * w + j + b];
            mx += win[a][b] * xv;
            my += win[a][b] * yv;
            mxx += win[a][b] * xv * xv;
            myy += win[a][b] * yv * yv;
            mxy += win[a][b] * xv * yv;
          }
        const double sx = mxx - mx * mx, sy = myy - my * my, sxy = mxy - mx * my;
        const double cs = (2 * sxy + C2) / (sx + sy + C2);
        const double lum = (2 * mx * my + C1) / (mx * mx + my * my + C1);
        cs_sum += cs;
        ssim_sum += lum * cs;
        ++count;
      }
    const double term = (l + 1 < scales ? cs_sum : ssim_sum) / count;
    result *= std::pow(std::max(term, 1e-4), weights_all[l] / wsum);
  }
  return result;
}

}  // namespace oracle

namespace oracle {

namespace {

const int kRing[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},  {3, 1},  {2, 2},  {1, 3},
                          {0, 3},  {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};

double corner_score(const neurtex::Image& g, int x, int y, double t) {
  const double p = g.at(y, x);
  double best = 0;
  for (int side = 0; side < 2; ++side) {
    auto qualifies = [&](int i) {
      const double v = g.at(y + kRing[i % 16][1], x + kRing[i % 16][0]);
      return side == 0 ? v > p + t : v < p - t;
    };
    bool corner = false;
    for (int start = 0; start < 16 && !corner; ++start) {
      bool all = true;
      for (int k = 0; k < 9; ++k) all = all && qualifies(start + k);
      corner = all;
    }
    if (!corner) continue;
    double sum = 0;
    for (int i = 0; i < 16; ++i)
      if (qualifies(i)) sum += std::abs(g.at(y + kRing[i][1], x + kRing[i][0]) - p) - t;
    best = std::max(best, sum);
  }
  return best;
}

}  // namespace

std::vector<std::pair<int, int>> fast_keypoints(const neurtex::Image& g, double threshold, int border) {
  const int h = g.height(), w = g.width();
  std::vector<double> score(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 3; y < h - 3; ++y)
    for (int x = 3; x < w - 3; ++x) score[static_cast<std::size_t>(y) * w + x] = corner_score(g, x, y, threshold);
  std::vector<std::pair<int, int>> out;
  for (int y = border; y < h - border; ++y)
    for (int x = border; x < w - border; ++x) {
      const double s = score[static_cast<std::size_t>(y) * w + x];
      if (s <= 0) continue;
      bool keep = true;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (score[static_cast<std::size_t>(y + dy) * w + x + dx] > s) keep = false;
      if (keep) out.emplace_back(x, y);
    }
  return out;
}

}  // namespace oracle
