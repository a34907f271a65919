// SPDX-License-Identifier: Apache-2.0
#include "neurtex/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "neurtex/binary_io.hpp"
#include "neurtex/errors.hpp"
#include "neurtex/parallel.hpp"
#include "neurtex/rng.hpp"

namespace neurtex {

// ---------------------------------------------------------------- height field

double HeightField::height(double x, double y) const {
  double h = base_z;
  for (const auto& b : bumps) {
    const double dx = x - b.cx, dy = y - b.cy;
    h += b.amplitude * std::exp(-(dx * dx + dy * dy) / (b.sigma * b.sigma));
  }
  return h;
}

Vec3 HeightField::gradient(double x, double y) const {
  Vec3 g;
  for (const auto& b : bumps) {
    const double dx = x - b.cx, dy = y - b.cy, s2 = b.sigma * b.sigma;
    const double e = b.amplitude * std::exp(-(dx * dx + dy * dy) / s2);
    g.x += -2.0 * dx / s2 * e;
    g.y += -2.0 * dy / s2 * e;
  }
  return g;
}

double HeightField::lipschitz() const {
  // max |grad| of a * exp(-r^2/s^2) is |a| sqrt(2) exp(-1/2) / s
  double l = 0;
  for (const auto& b : bumps) l += std::abs(b.amplitude) * std::sqrt(2.0) * std::exp(-0.5) / b.sigma;
  return l;
}

double HeightField::min_z() const {
  double z = base_z;
  for (const auto& b : bumps) z += std::min(0.0, b.amplitude);
  return z;
}

double HeightField::max_z() const {
  double z = base_z;
  for (const auto& b : bumps) z += std::max(0.0, b.amplitude);
  return z;
}

namespace {

bool slab(const Aabb& box, const Vec3& o, const Vec3& d, double& t0, double& t1) {
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < box.lo[a] || o[a] > box.hi[a]) return false;
      continue;
    }
    const double inv = 1.0 / d[a];
    double ta = (box.lo[a] - o[a]) * inv, tb = (box.hi[a] - o[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

std::optional<Hit> intersect_ellipsoid(const Vec3& center, const Vec3& radii, const Vec3& o, const Vec3& d,
                                       double t_min) {
  const Vec3 inv{1.0 / radii.x, 1.0 / radii.y, 1.0 / radii.z};
  const Vec3 os = hadamard(o - center, inv), ds = hadamard(d, inv);
  const double a = dot(ds, ds), b = dot(os, ds), c = dot(os, os) - 1.0;
  const double disc = b * b - a * c;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // numerically stable roots
  const double q = -(b + std::copysign(sq, b));
  double r0 = q / a, r1 = (q != 0.0) ? c / q : r0;
  if (r0 > r1) std::swap(r0, r1);
  double t = r0 > t_min ? r0 : (r1 > t_min ? r1 : -1.0);
  if (t < 0) return std::nullopt;
  const Vec3 p = o + t * d;
  const Vec3 g = hadamard(p - center, hadamard(inv, inv));
  return Hit{t, normalize(g)};
}

std::optional<Hit> intersect_heightfield(const HeightField& hf, const Vec3& o, const Vec3& d, double t_min) {
  Aabb box{{hf.x0, hf.y0, hf.min_z()}, {hf.x1, hf.y1, hf.max_z()}};
  double t0 = t_min, t1 = std::numeric_limits<double>::infinity();
  if (!slab(box, o, d, t0, t1)) return std::nullopt;

  auto g = [&](double t) {
    const Vec3 p = o + t * d;
    return p.z - hf.height(p.x, p.y);
  };
  auto dg = [&](double t) {
    const Vec3 p = o + t * d;
    const Vec3 grad = hf.gradient(p.x, p.y);
    return d.z - (grad.x * d.x + grad.y * d.y);
  };
  // |dg/dt| <= |d_z| + L |d_xy|, so stepping by |g| / K never crosses a root.
  // Close to the surface the march hands over to Newton, which converges to
  // the root it is approaching.
  const double k = std::abs(d.z) + hf.lipschitz() * std::hypot(d.x, d.y) + 1e-12;
  double t = t0;
  double gt = g(t);
  constexpr double kTol = 1e-10;
  for (int it = 0; std::abs(gt) > kTol; ++it) {
    if (it > 20000) return std::nullopt;
    if (std::abs(gt) < 1e-2) {
      double tn = t, gn = gt;
      for (int i = 0; i < 8 && std::abs(gn) > kTol; ++i) {
        const double s = dg(tn);
        if (s == 0.0) break;
        tn -= gn / s;
        gn = g(tn);
      }
      if (std::abs(gn) <= kTol && tn >= t - 1e-6 && tn - t < 0.05) {
        t = tn;
        gt = gn;
        break;
      }
    }
    t += std::abs(gt) / k;
    if (t > t1) return std::nullopt;
    gt = g(t);
  }
  if (t < t_min || t > t1) return std::nullopt;
  const Vec3 p = o + t * d;
  const Vec3 grad = hf.gradient(p.x, p.y);
  return Hit{t, normalize(Vec3{-grad.x, -grad.y, 1.0})};
}

}  // namespace

std::optional<Hit> intersect(const Primitive& shape, const Vec3& origin, const Vec3& dir, double t_min) {
  return std::visit(
      [&](const auto& s) -> std::optional<Hit> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          return intersect_ellipsoid(s.center, {s.radius, s.radius, s.radius}, origin, dir, t_min);
        } else if constexpr (std::is_same_v<T, Ellipsoid>) {
          return intersect_ellipsoid(s.center, s.radii, origin, dir, t_min);
        } else {
          return intersect_heightfield(s, origin, dir, t_min);
        }
      },
      shape);
}

Aabb bounding_box(const Primitive& shape) {
  return std::visit(
      [](const auto& s) -> Aabb {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          const Vec3 r{s.radius, s.radius, s.radius};
          return {s.center - r, s.center + r};
        } else if constexpr (std::is_same_v<T, Ellipsoid>) {
          return {s.center - s.radii, s.center + s.radii};
        } else {
          return {{s.x0, s.y0, s.min_z()}, {s.x1, s.y1, s.max_z()}};
        }
      },
      shape);
}

bool inside(const Primitive& shape, const Vec3& p, double margin) {
  return std::visit(
      [&](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          return norm(p - s.center) < s.radius + margin;
        } else if constexpr (std::is_same_v<T, Ellipsoid>) {
          const Vec3 r = s.radii + Vec3{margin, margin, margin};
          const Vec3 q{(p.x - s.center.x) / r.x, (p.y - s.center.y) / r.y, (p.z - s.center.z) / r.z};
          return dot(q, q) < 1.0;
        } else {
          if (p.x < s.x0 || p.x > s.x1 || p.y < s.y0 || p.y > s.y1) return false;
          return p.z < s.height(p.x, p.y) + margin;
        }
      },
      shape);
}

// ---------------------------------------------------------------------- scene

Scene::Scene(int scene_id, std::uint64_t seed, std::vector<SceneObject> objects)
    : scene_id_(scene_id), seed_(seed), objects_(std::move(objects)) {
  if (objects_.empty()) throw ConfigError("scene must contain at least one object");
  bounds_ = {{1e300, 1e300, 1e300}, {-1e300, -1e300, -1e300}};
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    auto& o = objects_[i];
    if (o.id != static_cast<int>(i)) throw ConfigError("scene object ids must be dense 0..O-1");
    o.bounds = bounding_box(o.shape);
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(o.bounds.lo[a]) || !std::isfinite(o.bounds.hi[a]))
        throw ConfigError("scene object " + std::to_string(i) + " has non-finite bounds");
      bounds_.lo[a] = std::min(bounds_.lo[a], o.bounds.lo[a]);
      bounds_.hi[a] = std::max(bounds_.hi[a], o.bounds.hi[a]);
    }
  }
}

Aabb Scene::viewing_region() const {
  Aabb r = objects_.front().bounds;
  const double mx = 0.2 * r.extent().x, my = 0.2 * r.extent().y;
  r.lo.x += mx;
  r.hi.x -= mx;
  r.lo.y += my;
  r.hi.y -= my;
  return r;
}

std::optional<std::pair<int, Hit>> Scene::trace(const Vec3& origin, const Vec3& dir) const {
  std::optional<std::pair<int, Hit>> best;
  constexpr double kTMin = 1e-6;
  for (const auto& o : objects_) {
    double t0 = kTMin, t1 = best ? best->second.t : std::numeric_limits<double>::infinity();
    if (!slab(o.bounds, origin, dir, t0, t1)) continue;
    auto h = intersect(o.shape, origin, dir, kTMin);
    if (h && (!best || h->t < best->second.t)) best = std::make_pair(o.id, *h);
  }
  return best;
}

// ------------------------------------------------------------------ generation

Scene generate_scene(int scene_id, std::uint64_t seed, const SceneGenConfig& cfg) {
  if (cfg.object_count < 1) throw ConfigError("object_count must be >= 1");
  Rng rng(derive_seed(seed, {0x5ce7e, static_cast<std::uint64_t>(scene_id)}));
  std::vector<SceneObject> objs;

  HeightField floor;
  floor.x0 = -cfg.floor_half_x;
  floor.x1 = cfg.floor_half_x;
  floor.y0 = -cfg.floor_half_y;
  floor.y1 = cfg.floor_half_y;
  const int nb = 6 + static_cast<int>(rng() % 4);
  for (int i = 0; i < nb; ++i)
    floor.bumps.push_back({uniform(rng, floor.x0, floor.x1), uniform(rng, floor.y0, floor.y1),
                           uniform(rng, -5.0, 7.0), uniform(rng, 12.0, 28.0)});
  objs.push_back({0, "wall", floor, rng(), {}});

  static const char* kNames[] = {"liver", "gallbladder", "ligament", "fat"};
  const double rx = cfg.floor_half_x * 0.6, ry = cfg.floor_half_y * 0.6;
  for (int id = 1; id < cfg.object_count; ++id) {
    const int role = (id - 1) % 4;
    const double cx = uniform(rng, -rx, rx), cy = uniform(rng, -ry, ry);
    const double ground = floor.height(cx, cy);
    Vec3 radii;
    switch (role) {
      case 0: radii = {uniform(rng, 24, 34), uniform(rng, 16, 24), uniform(rng, 7, 10)}; break;
      case 1: radii = {uniform(rng, 8, 11), uniform(rng, 5, 7), uniform(rng, 5, 7)}; break;
      case 2:
        radii = rng() % 2 ? Vec3{uniform(rng, 22, 32), uniform(rng, 2.5, 4), uniform(rng, 2.5, 4)}
                          : Vec3{uniform(rng, 2.5, 4), uniform(rng, 22, 32), uniform(rng, 2.5, 4)};
        break;
      default: radii = {uniform(rng, 12, 18), uniform(rng, 12, 18), uniform(rng, 5, 8)}; break;
    }
    const Vec3 c{cx, cy, ground + uniform(rng, 0.2, 0.6) * radii.z};
    std::string name = kNames[role];
    if (id > 4) name += "_" + std::to_string(id);
    objs.push_back({id, name, Ellipsoid{c, radii}, rng(), {}});
  }
  return Scene(scene_id, seed, std::move(objs));
}

// ------------------------------------------------------------------------ json

nlohmann::json scene_to_json(const Scene& scene) {
  using nlohmann::json;
  json objs = json::array();
  for (const auto& o : scene.objects()) {
    json jo{{"id", o.id}, {"name", o.name}, {"material_seed", o.material_seed}};
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Sphere>) {
            jo["type"] = "sphere";
            jo["center"] = {s.center.x, s.center.y, s.center.z};
            jo["radius"] = s.radius;
          } else if constexpr (std::is_same_v<T, Ellipsoid>) {
            jo["type"] = "ellipsoid";
            jo["center"] = {s.center.x, s.center.y, s.center.z};
            jo["radii"] = {s.radii.x, s.radii.y, s.radii.z};
          } else {
            jo["type"] = "heightfield";
            jo["x_range"] = {s.x0, s.x1};
            jo["y_range"] = {s.y0, s.y1};
            jo["base_z"] = s.base_z;
            json bumps = json::array();
            for (const auto& b : s.bumps) bumps.push_back({b.cx, b.cy, b.amplitude, b.sigma});
            jo["bumps"] = bumps;
          }
        },
        o.shape);
    objs.push_back(jo);
  }
  return json{{"scene_id", scene.scene_id()}, {"seed", scene.seed()}, {"objects", objs}};
}

Scene scene_from_json(const nlohmann::json& j) {
  try {
    std::vector<SceneObject> objs;
    for (const auto& jo : j.at("objects")) {
      SceneObject o;
      o.id = jo.at("id").get<int>();
      o.name = jo.value("name", std::string{});
      o.material_seed = jo.at("material_seed").get<std::uint64_t>();
      const auto type = jo.at("type").get<std::string>();
      auto vec = [](const nlohmann::json& a) { return Vec3{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()}; };
      if (type == "sphere") {
        o.shape = Sphere{vec(jo.at("center")), jo.at("radius").get<double>()};
      } else if (type == "ellipsoid") {
        o.shape = Ellipsoid{vec(jo.at("center")), vec(jo.at("radii"))};
      } else if (type == "heightfield") {
        HeightField hf;
        hf.x0 = jo.at("x_range").at(0).get<double>();
        hf.x1 = jo.at("x_range").at(1).get<double>();
        hf.y0 = jo.at("y_range").at(0).get<double>();
        hf.y1 = jo.at("y_range").at(1).get<double>();
        hf.base_z = jo.at("base_z").get<double>();
        for (const auto& b : jo.at("bumps"))
          hf.bumps.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()});
        o.shape = hf;
      } else {
        throw ConfigError("unknown primitive type '" + type + "'");
      }
      objs.push_back(std::move(o));
    }
    std::sort(objs.begin(), objs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return Scene(j.at("scene_id").get<int>(), j.at("seed").get<std::uint64_t>(), std::move(objs));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("scene description: ") + ex.what());
  }
}

void save_scene(const std::filesystem::path& path, const Scene& scene) {
  write_text(path, scene_to_json(scene).dump(2) + "\n");
}

Scene load_scene(const std::filesystem::path& path) {
  const auto text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
  return scene_from_json(j);
}

// ------------------------------------------------------------------ ray buffer

RayBuffer::RayBuffer(int h, int w)
    : height(h), width(w),
      point(static_cast<std::size_t>(h) * w),
      normal(static_cast<std::size_t>(h) * w),
      depth(static_cast<std::size_t>(h) * w, 0.0),
      cos_incidence(static_cast<std::size_t>(h) * w, 0.0),
      object(static_cast<std::size_t>(h) * w, kMiss) {}

double RayBuffer::coverage() const {
  if (object.empty()) return 0.0;
  const auto hits = std::count_if(object.begin(), object.end(), [](int o) { return o != kMiss; });
  return static_cast<double>(hits) / static_cast<double>(object.size());
}

namespace {

void cast_pixel(const Scene& scene, const CameraView& view, const Vec3& eye, int x, int y, RayBuffer& buf) {
  const std::size_t i = buf.index(y, x);
  const Vec3 d = view.ray_direction(x, y);
  auto hit = scene.trace(eye, d);
  if (!hit) return;
  const Vec3 p = eye + hit->second.t * d;
  Vec3 n = hit->second.normal;
  double c = -dot(n, d);
  if (c < 0) {
    n = -n;
    c = -c;
  }
  buf.object[i] = hit->first;
  buf.point[i] = p;
  buf.normal[i] = n;
  buf.depth[i] = view.to_camera(p).z;
  buf.cos_incidence[i] = c;
}

}  // namespace

RayBuffer ray_cast(const Scene& scene, const CameraView& view) {
  view.validate();
  const auto& k = view.intrinsics;
  RayBuffer buf(k.height, k.width);
  const Vec3 eye = view.center();
#pragma omp parallel for schedule(dynamic, 4) num_threads(thread_count())
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) cast_pixel(scene, view, eye, x, y, buf);
  return buf;
}

RayBuffer ray_cast_serial(const Scene& scene, const CameraView& view) {
  view.validate();
  const auto& k = view.intrinsics;
  RayBuffer buf(k.height, k.width);
  const Vec3 eye = view.center();
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) cast_pixel(scene, view, eye, x, y, buf);
  return buf;
}

Image pack_ray_buffer(const RayBuffer& buf) {
  Image img(buf.height, buf.width, 8);
  for (int y = 0; y < buf.height; ++y)
    for (int x = 0; x < buf.width; ++x) {
      const auto i = buf.index(y, x);
      auto px = img.pixel(y, x);
      for (int a = 0; a < 3; ++a) {
        px[a] = static_cast<float>(buf.point[i][a]);
        px[3 + a] = static_cast<float>(buf.normal[i][a]);
      }
      px[6] = static_cast<float>(buf.depth[i]);
      px[7] = static_cast<float>(buf.object[i]);
    }
  return img;
}

RayBuffer unpack_ray_buffer(const Image& img) {
  if (img.channels() != 8) throw ContractViolation("unpack_ray_buffer: expected 8 channels");
  RayBuffer buf(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const auto i = buf.index(y, x);
      auto px = img.pixel(y, x);
      buf.point[i] = {px[0], px[1], px[2]};
      buf.normal[i] = {px[3], px[4], px[5]};
      buf.depth[i] = px[6];
      buf.object[i] = static_cast<int>(std::lround(px[7]));
    }
  return buf;
}

// ------------------------------------------------------------------ rendering

Vec3 reference_color(const Scene& scene, int object_id) {
  // Role palette keeps the simulated domain recognizable; the seed jitters it.
  static const Vec3 kPalette[] = {
      {0.85, 0.55, 0.55}, {0.60, 0.25, 0.20}, {0.30, 0.65, 0.35}, {0.90, 0.85, 0.70}, {0.95, 0.80, 0.35}};
  Rng rng(derive_seed(scene.object(object_id).material_seed, {0xc0102}));
  const Vec3 base = kPalette[object_id % 5];
  Vec3 c;
  for (int a = 0; a < 3; ++a) c[a] = std::clamp(base[a] + uniform(rng, -0.05, 0.05), 0.05, 1.0);
  return c;
}

Image render_reference(const Scene& scene, const RayBuffer& buf) {
  constexpr double kAmbient = 0.25;
  std::vector<Vec3> colors;
  for (int o = 0; o < scene.object_count(); ++o) colors.push_back(reference_color(scene, o));
  Image img(buf.height, buf.width, 3);
  for (int y = 0; y < buf.height; ++y)
    for (int x = 0; x < buf.width; ++x) {
      const auto i = buf.index(y, x);
      const int o = buf.object[i];
      if (o == kMiss) continue;
      if (o < 0 || o >= scene.object_count()) throw ContractViolation("render_reference: object id out of range");
      const double shade = kAmbient + (1.0 - kAmbient) * buf.cos_incidence[i];
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(colors[o][c] * shade);
    }
  return img;
}

namespace {

double hash01(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ULL ^
                                                  splitmix64(static_cast<std::uint64_t>(y) * 0xc2b2ae3d27d4eb4fULL ^
                                                             static_cast<std::uint64_t>(z) * 0x165667b19e3779f9ULL)));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

/// Trilinear value noise in [0,1] with quintic fade.
double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy), iz = static_cast<std::int64_t>(fz);
  const double u = fade(p.x - fx), v = fade(p.y - fy), w = fade(p.z - fz);
  double acc = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double wt = (dx ? u : 1 - u) * (dy ? v : 1 - v) * (dz ? w : 1 - w);
        acc += wt * hash01(ix + dx, iy + dy, iz + dz, seed);
      }
  return acc;
}

double fbm(const Vec3& p, std::uint64_t seed, int octaves) {
  double sum = 0, amp = 0.5, norm_ = 0, f = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(p * f, seed + static_cast<std::uint64_t>(o) * 7919);
    norm_ += amp;
    amp *= 0.5;
    f *= 2.03;
  }
  return sum / norm_;
}

double smoothstep(double a, double b, double x) {
  const double t = std::clamp((x - a) / (b - a), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

}  // namespace

PhotorealMaterial photoreal_material(const Scene& scene, int object_id) {
  static const Vec3 kTissue[] = {
      {0.80, 0.42, 0.38}, {0.55, 0.18, 0.14}, {0.45, 0.50, 0.28}, {0.85, 0.70, 0.55}, {0.92, 0.78, 0.40}};
  PhotorealMaterial m;
  m.seed = derive_seed(scene.seed(), {0xa1bed0, scene.object(object_id).material_seed});
  Rng rng(m.seed);
  m.tissue = kTissue[object_id % 5];
  for (int a = 0; a < 3; ++a) m.tissue[a] = std::clamp(m.tissue[a] + uniform(rng, -0.06, 0.06), 0.05, 0.95);
  m.offset = {uniform(rng, -100, 100), uniform(rng, -100, 100), uniform(rng, -100, 100)};
  return m;
}

Vec3 photoreal_albedo(const PhotorealMaterial& m, const Vec3& point) {
  const Vec3 p = point + m.offset;

  // Mottling: broad low-frequency variation plus fine speckle.
  const double mottle = fbm(p / 7.0, m.seed + 1, 3);
  const double speckle = value_noise(p / 1.3, m.seed + 2);
  const double shade = 0.55 + 0.6 * mottle + 0.25 * (speckle - 0.5);

  // Vessels: thin ridges of band-limited noise at two scales.
  const double r1 = 1.0 - std::abs(2.0 * fbm(p / 11.0, m.seed + 3, 2) - 1.0);
  const double r2 = 1.0 - std::abs(2.0 * value_noise(p / 4.5, m.seed + 4) - 1.0);
  const double vessel = std::max(smoothstep(0.90, 0.97, r1), 0.8 * smoothstep(0.92, 0.98, r2));

  const Vec3 vessel_color{0.40, 0.05, 0.08};
  Vec3 albedo;
  for (int a = 0; a < 3; ++a) {
    const double t = std::clamp(m.tissue[a] * shade, 0.0, 1.0);
    albedo[a] = std::clamp(t * (1.0 - vessel) + vessel_color[a] * vessel, 0.0, 1.0);
  }
  return albedo;
}

Vec3 photoreal_albedo(const Scene& scene, int object_id, const Vec3& point) {
  return photoreal_albedo(photoreal_material(scene, object_id), point);
}

Image render_photoreal(const Scene& scene, const RayBuffer& buf, const CameraView& view,
                       const PhotorealShading& shading) {
  Image img(buf.height, buf.width, 3);
  const double half_w = 0.5 * view.intrinsics.width;
  const double cx = view.intrinsics.u0, cy = view.intrinsics.v0;
  std::vector<PhotorealMaterial> materials;
  for (int o = 0; o < scene.object_count(); ++o) materials.push_back(photoreal_material(scene, o));
  for (int o : buf.object)
    if (o != kMiss && (o < 0 || o >= scene.object_count()))
      throw ContractViolation("render_photoreal: object id out of range");
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (int y = 0; y < buf.height; ++y)
    for (int x = 0; x < buf.width; ++x) {
      const auto i = buf.index(y, x);
      const int o = buf.object[i];
      if (o == kMiss) continue;
      const double rx = (x - cx) / half_w, ry = (y - cy) / half_w;
      const double lambert = shading.ambient + (1.0 - shading.ambient) * buf.cos_incidence[i];
      double gain = shading.base * lambert / (1.0 + shading.radial_k * (rx * rx + ry * ry)) /
                    (1.0 + shading.depth_m * buf.depth[i]);
      gain = std::min(gain, 1.0);
      const Vec3 a = photoreal_albedo(materials[static_cast<std::size_t>(o)], buf.point[i]);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(a[c] * gain);
    }
  return img;
}

}  // namespace neurtex
