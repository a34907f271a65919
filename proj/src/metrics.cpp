// SPDX-License-Identifier: Apache-2.0
#include "neurtex/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "neurtex/errors.hpp"
#include "neurtex/parallel.hpp"
#include "neurtex/rng.hpp"

namespace neurtex {
namespace {

// Uniform in [0, 1) and standard normal draws from raw engine output, so the
// streams do not depend on the standard library's distribution code.
double unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double normal(Rng& rng) {
  const double u1 = 1.0 - unit(rng), u2 = unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Image luma(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw ContractViolation("expected a 1- or 3-channel image");
  return to_grayscale(img);
}

// ---------------------------------------------------------------- block matching

Image half(const Image& g) {
  Image out(g.height() / 2, g.width() / 2, 1);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      out.at(y, x) = 0.25f * (g.at(2 * y, 2 * x) + g.at(2 * y, 2 * x + 1) + g.at(2 * y + 1, 2 * x) +
                              g.at(2 * y + 1, 2 * x + 1));
  return out;
}

struct Level {
  const Image& a;
  const Image& b;
  int block, radius;

  float px(const Image& g, int y, int x) const {
    return g.at(std::clamp(y, 0, g.height() - 1), std::clamp(x, 0, g.width() - 1));
  }

  double sad(int x, int y, int ox, int oy) const {
    const int h = block / 2;
    double s = 0;
    const bool inside = x - h >= 0 && y - h >= 0 && x + h < a.width() && y + h < a.height() && x + ox - h >= 0 &&
                        y + oy - h >= 0 && x + ox + h < b.width() && y + oy + h < b.height();
    if (inside) {
      for (int v = -h; v <= h; ++v) {
        const float* ra = &a.data()[static_cast<std::size_t>(y + v) * a.width() + (x - h)];
        const float* rb = &b.data()[static_cast<std::size_t>(y + oy + v) * b.width() + (x + ox - h)];
        for (int u = 0; u < block; ++u) s += std::abs(ra[u] - rb[u]);
      }
      return s;
    }
    for (int v = -h; v <= h; ++v)
      for (int u = -h; u <= h; ++u) s += std::abs(px(a, y + v, x + u) - px(b, y + oy + v, x + ox + u));
    return s;
  }

  // Best integer offset around (cx, cy) plus a parabola refinement per axis.
  std::pair<double, double> match(int x, int y, int cx, int cy) const {
    const int r = radius, side = 2 * r + 1;
    thread_local std::vector<double> cost;
    cost.assign(static_cast<std::size_t>(side) * side, 0.0);
    int bx = 0, by = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double c = sad(x, y, cx + dx, cy + dy);
        cost[static_cast<std::size_t>(dy + r) * side + (dx + r)] = c;
        const int d2 = dx * dx + dy * dy, b2 = bx * bx + by * by;
        if (c < best || (c == best && d2 < b2)) {
          best = c;
          bx = dx;
          by = dy;
        }
      }
    auto at = [&](int dx, int dy) { return cost[static_cast<std::size_t>(dy + r) * side + (dx + r)]; };
    auto refine = [](double cm, double c0, double cp) {
      const double den = cm - 2 * c0 + cp;
      if (!(den > 0)) return 0.0;
      return std::clamp(0.5 * (cm - cp) / den, -0.5, 0.5);
    };
    double sx = 0, sy = 0;
    if (best == 0) return {cx + bx, cy + by};  // exact match
    if (bx > -r && bx < r) sx = refine(at(bx - 1, by), at(bx, by), at(bx + 1, by));
    if (by > -r && by < r) sy = refine(at(bx, by - 1), at(bx, by), at(bx, by + 1));
    return {cx + bx + sx, cy + by + sy};
  }
};

FlowField block_flow(const Image& ga, const Image& gb, const BlockMatchConfig& cfg, bool parallel) {
  if (!ga.same_shape(gb) || ga.channels() != 1) throw ContractViolation("estimate_flow: inputs must be same-size grayscale");
  if (cfg.levels < 1 || cfg.block < 1 || cfg.block % 2 == 0 || cfg.radius < 1)
    throw ConfigError("estimate_flow: levels >= 1, odd block and radius >= 1 required");
  std::vector<Image> pa{ga}, pb{gb};
  while (static_cast<int>(pa.size()) < cfg.levels && pa.back().height() >= 2 * cfg.block &&
         pa.back().width() >= 2 * cfg.block) {
    pa.push_back(half(pa.back()));
    pb.push_back(half(pb.back()));
  }
  Image prior;  // 2-channel flow of the coarser level
  for (int l = static_cast<int>(pa.size()) - 1; l >= 0; --l) {
    const Image& a = pa[static_cast<std::size_t>(l)];
    const Level lv{a, pb[static_cast<std::size_t>(l)], cfg.block, cfg.radius};
    Image flow(a.height(), a.width(), 2);
    const int h = a.height(), w = a.width();
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (parallel)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double fx = 0, fy = 0;
        if (!prior.empty()) {
          const int qy = std::min(y / 2, prior.height() - 1), qx = std::min(x / 2, prior.width() - 1);
          fx = 2.0 * prior.at(qy, qx, 0);
          fy = 2.0 * prior.at(qy, qx, 1);
        }
        const auto [mx, my] = lv.match(x, y, static_cast<int>(std::lround(fx)), static_cast<int>(std::lround(fy)));
        flow.at(y, x, 0) = static_cast<float>(mx);
        flow.at(y, x, 1) = static_cast<float>(my);
      }
    prior = std::move(flow);
  }
  FlowField out(ga.height(), ga.width());
  out.flow = std::move(prior);
  std::fill(out.valid.begin(), out.valid.end(), std::uint8_t{1});
  return out;
}

// ---------------------------------------------------------------- FAST / BRIEF

constexpr std::array<std::array<int, 2>, 16> kCircle{{{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1}, {2, 2}, {1, 3},
                                                      {0, 3}, {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2},
                                                      {-1, -3}}};

// +1 brighter, -1 darker, 0 similar, for each circle pixel.
std::array<int, 16> ring_states(const Image& g, int x, int y, double t) {
  const double p = g.at(y, x);
  std::array<int, 16> s{};
  for (int i = 0; i < 16; ++i) {
    const double v = g.at(y + kCircle[i][1], x + kCircle[i][0]);
    s[i] = v > p + t ? 1 : (v < p - t ? -1 : 0);
  }
  return s;
}

bool has_arc(const std::array<int, 16>& s, int sign) {
  int run = 0;
  for (int i = 0; i < 32; ++i) {
    run = s[i % 16] == sign ? run + 1 : 0;
    if (run >= 9) return true;
  }
  return false;
}

constexpr int kAngleBins = 30;

struct Pattern {
  int radius = 0;
  // [bin][bit] -> (x1, y1, x2, y2)
  std::vector<std::array<std::array<int, 4>, 256>> rotated;
};

const Pattern& pattern_for(const OrbConfig& cfg) {
  thread_local Pattern cached;
  thread_local std::uint64_t cached_seed = 0;
  if (cached.radius == cfg.patch_radius && cached_seed == cfg.pattern_seed && !cached.rotated.empty()) return cached;
  const int r = cfg.patch_radius;
  Rng rng(derive_seed(cfg.pattern_seed, {0xb41ef}));
  auto point = [&]() {
    for (;;) {
      const double px = normal(rng) * r / 2.0, py = normal(rng) * r / 2.0;
      if (px * px + py * py <= double(r - 1) * (r - 1)) return std::array<double, 2>{px, py};
    }
  };
  std::array<std::array<double, 4>, 256> base{};
  for (auto& pr : base) {
    std::array<double, 2> p, q;
    do {
      p = point();
      q = point();
    } while (std::lround(p[0]) == std::lround(q[0]) && std::lround(p[1]) == std::lround(q[1]));
    pr = {p[0], p[1], q[0], q[1]};
  }
  Pattern pat;
  pat.radius = r;
  pat.rotated.resize(kAngleBins);
  for (int b = 0; b < kAngleBins; ++b) {
    const double a = 2 * std::numbers::pi * b / kAngleBins, c = std::cos(a), s = std::sin(a);
    for (int i = 0; i < 256; ++i) {
      const auto& q = base[static_cast<std::size_t>(i)];
      pat.rotated[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)] = {
          static_cast<int>(std::lround(c * q[0] - s * q[1])), static_cast<int>(std::lround(s * q[0] + c * q[1])),
          static_cast<int>(std::lround(c * q[2] - s * q[3])), static_cast<int>(std::lround(s * q[2] + c * q[3]))};
    }
  }
  cached = std::move(pat);
  cached_seed = cfg.pattern_seed;
  return cached;
}

double centroid_angle(const Image& g, int x, int y, int r) {
  double m01 = 0, m10 = 0;
  for (int v = -r; v <= r; ++v)
    for (int u = -r; u <= r; ++u) {
      if (u * u + v * v > r * r) continue;
      const double i = g.at(y + v, x + u);
      m10 += u * i;
      m01 += v * i;
    }
  return std::atan2(m01, m10);
}

OrbResult aggregate(std::vector<MatchScore> per_pair, int k) {
  OrbResult r;
  r.k = k;
  r.pairs = static_cast<int>(per_pair.size());
  double acc = 0, correct = 0;
  for (const auto& p : per_pair) {
    correct += p.correct;
    if (const auto a = p.accuracy()) {
      acc += *a;
      ++r.defined_pairs;
    }
  }
  if (r.defined_pairs > 0) r.accuracy = acc / r.defined_pairs;
  r.correct_per_pair = r.pairs > 0 ? correct / r.pairs : 0.0;
  r.per_pair = std::move(per_pair);
  return r;
}

std::vector<FeatureSet> features_of(const std::vector<Image>& frames, const std::vector<RayBuffer>& bufs,
                                    const OrbConfig& cfg) {
  if (frames.size() != bufs.size()) throw ContractViolation("frame and ray-buffer counts differ");
  std::vector<FeatureSet> out(frames.size());
  const int n = static_cast<int>(frames.size());
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = detect_features(frames[i], bufs[i], cfg);
  return out;
}

std::vector<MatchScore> score_pairs(const std::vector<FeatureSet>& f, const std::vector<std::pair<int, int>>& pairs) {
  std::vector<MatchScore> out(pairs.size());
  const int n = static_cast<int>(pairs.size());
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = match_and_score(f[static_cast<std::size_t>(pairs[i].first)],
                                                       f[static_cast<std::size_t>(pairs[i].second)]);
  return out;
}

}  // namespace

FlowField estimate_flow(const Image& gray_t, const Image& gray_t1, const BlockMatchConfig& cfg) {
  return block_flow(gray_t, gray_t1, cfg, true);
}

FlowField estimate_flow_serial(const Image& gray_t, const Image& gray_t1, const BlockMatchConfig& cfg) {
  return block_flow(gray_t, gray_t1, cfg, false);
}

double of_consistency(const std::vector<Image>& frames, const std::vector<FlowField>& gt_flow,
                      const BlockMatchConfig& cfg) {
  if (frames.size() < 2 || gt_flow.size() + 1 != frames.size())
    throw ContractViolation("of_consistency: need T >= 2 frames and T - 1 ground-truth flows");
  std::vector<Image> gray;
  for (const auto& f : frames) gray.push_back(luma(f));
  double total = 0;
  int used = 0;
  for (std::size_t t = 0; t + 1 < gray.size(); ++t) {
    const FlowField& gt = gt_flow[t];
    if (gt.height() != gray[t].height() || gt.width() != gray[t].width())
      throw ContractViolation("of_consistency: flow and frame sizes differ");
    const FlowField est = estimate_flow(gray[t], gray[t + 1], cfg);
    double sum = 0;
    std::size_t n = 0;
    for (int y = 0; y < gt.height(); ++y)
      for (int x = 0; x < gt.width(); ++x) {
        if (!gt.valid[static_cast<std::size_t>(y) * gt.width() + x]) continue;
        sum += std::abs(est.flow.at(y, x, 0) - gt.flow.at(y, x, 0)) + std::abs(est.flow.at(y, x, 1) - gt.flow.at(y, x, 1));
        n += 2;
      }
    if (n == 0) continue;
    total += sum / static_cast<double>(n);
    ++used;
  }
  return used > 0 ? total / used : 0.0;
}

bool fast_corner(const Image& g, int x, int y, double threshold) {
  const auto s = ring_states(g, x, y, threshold);
  return has_arc(s, 1) || has_arc(s, -1);
}

double fast_score(const Image& g, int x, int y, double threshold) {
  const auto s = ring_states(g, x, y, threshold);
  const double p = g.at(y, x);
  double best = 0;
  for (int sign : {1, -1}) {
    if (!has_arc(s, sign)) continue;
    double sum = 0;
    for (int i = 0; i < 16; ++i)
      if (s[i] == sign) sum += std::abs(g.at(y + kCircle[i][1], x + kCircle[i][0]) - p) - threshold;
    best = std::max(best, sum);
  }
  return best;
}

FeatureSet detect_features(const Image& img, const RayBuffer& buf, const OrbConfig& cfg) {
  if (cfg.patch_radius < 3 || cfg.max_features < 1 || !(cfg.fast_threshold > 0))
    throw ConfigError("detect_features: patch_radius >= 3, max_features >= 1, threshold > 0 required");
  Image g = luma(img);
  if (buf.height != g.height() || buf.width != g.width()) throw ContractViolation("detect_features: buffer size differs");
  for (float& v : g.data()) v *= 255.0f;
  const int h = g.height(), w = g.width(), border = cfg.patch_radius + 1;
  FeatureSet out;
  if (h <= 2 * border || w <= 2 * border) return out;

  std::vector<double> score(static_cast<std::size_t>(h) * w, 0.0);
  auto sc = [&](int y, int x) -> double& { return score[static_cast<std::size_t>(y) * w + x]; };
  for (int y = 3; y < h - 3; ++y)
    for (int x = 3; x < w - 3; ++x) sc(y, x) = fast_score(g, x, y, cfg.fast_threshold);

  std::vector<Keypoint> kps;
  for (int y = border; y < h - border; ++y)
    for (int x = border; x < w - border; ++x) {
      const double s = sc(y, x);
      if (s <= 0 || !buf.hit(buf.index(y, x))) continue;
      bool peak = true;
      for (int v = -1; v <= 1 && peak; ++v)
        for (int u = -1; u <= 1; ++u)
          if ((u || v) && sc(y + v, x + u) > s) {
            peak = false;
            break;
          }
      if (!peak) continue;
      Keypoint k;
      k.x = x;
      k.y = y;
      k.score = s;
      k.point = buf.point[buf.index(y, x)];
      kps.push_back(k);
    }
  std::stable_sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });
  if (static_cast<int>(kps.size()) > cfg.max_features) kps.resize(static_cast<std::size_t>(cfg.max_features));

  const Image smooth = gaussian_blur(g, cfg.blur_sigma);
  const Pattern& pat = pattern_for(cfg);
  for (auto& k : kps) {
    k.angle = centroid_angle(smooth, k.x, k.y, cfg.patch_radius);
    double turns = k.angle / (2 * std::numbers::pi);
    turns -= std::floor(turns);
    const int bin = static_cast<int>(std::lround(turns * kAngleBins)) % kAngleBins;
    Descriptor d{};
    const auto& rot = pat.rotated[static_cast<std::size_t>(bin)];
    for (int i = 0; i < 256; ++i) {
      const auto& q = rot[static_cast<std::size_t>(i)];
      if (smooth.at(k.y + q[1], k.x + q[0]) < smooth.at(k.y + q[3], k.x + q[2]))
        d[static_cast<std::size_t>(i / 64)] |= std::uint64_t{1} << (i % 64);
    }
    out.keypoints.push_back(k);
    out.descriptors.push_back(d);
  }
  return out;
}

int hamming(const Descriptor& a, const Descriptor& b) {
  int n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += std::popcount(a[i] ^ b[i]);
  return n;
}

std::optional<double> MatchScore::accuracy() const {
  if (matches == 0) return std::nullopt;
  return 100.0 * correct / matches;
}

MatchScore match_and_score(const FeatureSet& a, const FeatureSet& b, double correct_mm, double ratio) {
  MatchScore r;
  if (a.size() == 0 || b.size() == 0) return r;
  std::vector<int> best_ba(b.size(), -1), dist_ba(b.size(), std::numeric_limits<int>::max());
  for (std::size_t j = 0; j < b.size(); ++j)
    for (std::size_t i = 0; i < a.size(); ++i) {
      const int d = hamming(a.descriptors[i], b.descriptors[j]);
      if (d < dist_ba[j]) {
        dist_ba[j] = d;
        best_ba[j] = static_cast<int>(i);
      }
    }
  for (std::size_t i = 0; i < a.size(); ++i) {
    int d1 = std::numeric_limits<int>::max(), d2 = std::numeric_limits<int>::max(), j1 = -1;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const int d = hamming(a.descriptors[i], b.descriptors[j]);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        j1 = static_cast<int>(j);
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (best_ba[static_cast<std::size_t>(j1)] != static_cast<int>(i)) continue;
    if (d2 != std::numeric_limits<int>::max() && !(d1 < ratio * d2)) continue;
    ++r.matches;
    if (norm(a.keypoints[i].point - b.keypoints[static_cast<std::size_t>(j1)].point) < correct_mm) ++r.correct;
  }
  return r;
}

OrbResult orb_k(const std::vector<FeatureSet>& f, int k) {
  if (k < 1 || static_cast<int>(f.size()) <= k) throw ContractViolation("orb_k: need k >= 1 and more than k frames");
  std::vector<std::pair<int, int>> pairs;
  for (int t = 0; t + k < static_cast<int>(f.size()); ++t) pairs.emplace_back(t, t + k);
  return aggregate(score_pairs(f, pairs), k);
}

OrbResult orb_k(const std::vector<Image>& seq, const std::vector<RayBuffer>& bufs, int k, const OrbConfig& cfg) {
  if (k < 1 || static_cast<int>(seq.size()) <= k) throw ContractViolation("orb_k: need k >= 1 and more than k frames");
  return orb_k(features_of(seq, bufs, cfg), k);
}

int revisit_partner(int t, int T, int k) {
  if (k < 1 || t < 1 || t + k > T) throw ContractViolation("revisit_partner: need 1 <= t and t + k <= T");
  return 2 * T - t - (k - 1);
}

std::vector<int> revisit_order(int T) {
  if (T < 1) throw ContractViolation("revisit_order: T >= 1 required");
  std::vector<int> order;
  for (int t = 0; t < T; ++t) order.push_back(t);
  for (int t = T - 1; t >= 0; --t) order.push_back(t);
  return order;
}

OrbResult revisit_protocol(const std::vector<FeatureSet>& ext, int k) {
  if (ext.size() % 2 != 0) throw ContractViolation("revisit_protocol: extended sequence must have 2T frames");
  const int T = static_cast<int>(ext.size() / 2);
  if (k < 1 || T <= k) throw ContractViolation("revisit_protocol: need T > k");
  std::vector<std::pair<int, int>> pairs;
  for (int t = 1; t + k <= T; ++t) pairs.emplace_back(t - 1, revisit_partner(t, T, k) - 1);
  return aggregate(score_pairs(ext, pairs), k);
}

OrbResult revisit_protocol(const std::vector<Image>& extended, const std::vector<RayBuffer>& extended_bufs, int k,
                           const OrbConfig& cfg) {
  if (extended.size() % 2 != 0 || static_cast<int>(extended.size() / 2) <= k)
    throw ContractViolation("revisit_protocol: need 2T frames with T > k");
  return revisit_protocol(features_of(extended, extended_bufs, cfg), k);
}

namespace {

nlohmann::json orb_json(const OrbResult& r) {
  return {{"accuracy", r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr)},
          {"correct_per_pair", r.correct_per_pair},
          {"pairs", r.pairs},
          {"defined_pairs", r.defined_pairs}};
}

}  // namespace

void to_json(nlohmann::json& j, const ConsistencyReport& r) {
  nlohmann::json per_k = nlohmann::json::object(), revisit = nlohmann::json::object();
  for (const auto& o : r.per_k) per_k[std::to_string(o.k)] = orb_json(o);
  for (const auto& o : r.revisit) revisit[std::to_string(o.k)] = orb_json(o);
  j = {{"sequence_id", r.sequence_id}, {"of_error", r.of_error}, {"per_k", per_k}, {"revisit", revisit}};
}

std::string report_csv(const ConsistencyReport& r) {
  std::string out = "sequence_id,variant,k,accuracy,correct_per_pair,pairs,defined_pairs,of_error\n";
  auto rows = [&](const std::vector<OrbResult>& v, const char* name) {
    for (const auto& o : v) {
      char b[256];
      std::snprintf(b, sizeof b, ",%s,%d,%s,%.9g,%d,%d,%.9g\n", name, o.k,
                    o.accuracy ? std::to_string(*o.accuracy).c_str() : "", o.correct_per_pair, o.pairs,
                    o.defined_pairs, r.of_error);
      out += r.sequence_id + b;
    }
  };
  rows(r.per_k, "forward");
  rows(r.revisit, "revisit");
  return out;
}

SequenceGeometry sequence_geometry(const Scene& scene, const std::vector<CameraView>& cams) {
  SequenceGeometry g;
  for (const auto& c : cams) g.bufs.push_back(ray_cast(scene, c));
  for (std::size_t t = 0; t + 1 < cams.size(); ++t)
    g.gt_flow.push_back(ground_truth_flow(cams[t], g.bufs[t], cams[t + 1], g.bufs[t + 1]));
  return g;
}

ConsistencyReport evaluate_sequence(const std::string& id, const std::vector<Image>& frames,
                                    const SequenceGeometry& geo, const std::vector<Image>* extended,
                                    const OrbConfig& orb, const BlockMatchConfig& flow) {
  if (frames.size() != geo.bufs.size()) throw ContractViolation("evaluate_sequence: frame count differs from cameras");
  const int T = static_cast<int>(frames.size());
  ConsistencyReport r;
  r.sequence_id = id;
  r.of_error = of_consistency(frames, geo.gt_flow, flow);
  const auto f = features_of(frames, geo.bufs, orb);
  for (int k : {1, 5, 10})
    if (T > k) r.per_k.push_back(orb_k(f, k));
  if (extended) {
    if (static_cast<int>(extended->size()) != 2 * T)
      throw ContractViolation("evaluate_sequence: revisit needs 2T frames, got " + std::to_string(extended->size()));
    std::vector<RayBuffer> ext_bufs;
    for (int i : revisit_order(T)) ext_bufs.push_back(geo.bufs[static_cast<std::size_t>(i)]);
    const auto fe = features_of(*extended, ext_bufs, orb);
    for (int k : {1, 5, 10})
      if (T > k) r.revisit.push_back(revisit_protocol(fe, k));
  }
  return r;
}

Image drift_noise_frame(const Image& clean, int n, double sigma_step, std::uint64_t seed) {
  Image out = clean;
  std::vector<double> walk(clean.size(), 0.0);
  for (int s = 1; s <= n; ++s) {
    Rng rng(derive_seed(seed, {0xd71f7, static_cast<std::uint64_t>(s)}));
    for (double& v : walk) v += sigma_step * normal(rng);
  }
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<float>(std::clamp(static_cast<double>(data[i]) + walk[i], 0.0, 1.0));
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0)) return img;
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const int h = img.height(), w = img.width(), c = img.channels();
  Image tmp(h, w, c), out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * img.at(y, std::clamp(x + i, 0, w - 1), ch);
        tmp.at(y, x, ch) = static_cast<float>(s);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * tmp.at(std::clamp(y + i, 0, h - 1), x, ch);
        out.at(y, x, ch) = static_cast<float>(s);
      }
  return out;
}

}  // namespace neurtex
