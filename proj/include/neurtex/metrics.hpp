// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "neurtex/camera.hpp"
#include "neurtex/flow.hpp"
#include "neurtex/image.hpp"
#include "neurtex/scene.hpp"

namespace neurtex {

// ------------------------------------------------------------------ flow

/// Coarse-to-fine block matching: SAD over block x block windows, integer
/// search of +-radius around the upsampled coarser estimate, then a parabola
/// fit per axis for the sub-pixel part.
struct BlockMatchConfig {
  int levels = 3;
  int block = 7;
  int radius = 4;
};

/// Dense flow from img_t to img_t1 (grayscale, same size). Valid everywhere.
FlowField estimate_flow(const Image& gray_t, const Image& gray_t1, const BlockMatchConfig& cfg = {});
FlowField estimate_flow_serial(const Image& gray_t, const Image& gray_t1, const BlockMatchConfig& cfg = {});

/// Mean absolute per-component difference between estimated and ground-truth
/// flow over GT-valid pixels, averaged over consecutive frame pairs. Frames
/// may be RGB (converted to luma) or grayscale; gt_flow[t] maps t -> t+1.
double of_consistency(const std::vector<Image>& frames, const std::vector<FlowField>& gt_flow,
                      const BlockMatchConfig& cfg = {});

// ------------------------------------------------------------------ features

struct OrbConfig {
  double fast_threshold = 12.0;  // on the 0..255 luma scale
  int max_features = 500;
  int patch_radius = 8;          // descriptor and orientation window
  double blur_sigma = 1.2;       // smoothing before descriptor tests
  std::uint64_t pattern_seed = 0x0b1e;
};

using Descriptor = std::array<std::uint64_t, 4>;  // 256 bits

struct Keypoint {
  int x = 0, y = 0;
  double angle = 0;  // radians, intensity-centroid orientation
  double score = 0;
  Vec3 point;        // surface point under the pixel, mm
};

struct FeatureSet {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;  // parallel to keypoints
  std::size_t size() const { return keypoints.size(); }
};

/// FAST-9 segment test on the circle of 16 pixels.
bool fast_corner(const Image& gray255, int x, int y, double threshold);
/// Segment-test score used for non-max suppression (0 if not a corner).
double fast_score(const Image& gray255, int x, int y, double threshold);

/// ORB-lite: FAST-9 with 3x3 non-max suppression, intensity-centroid
/// orientation and a steered 256-bit binary descriptor from a fixed seeded
/// sampling pattern. Keypoints on MISS pixels are dropped; each keeps the
/// surface point under it.
FeatureSet detect_features(const Image& img, const RayBuffer& buf, const OrbConfig& cfg = {});

int hamming(const Descriptor& a, const Descriptor& b);

struct MatchScore {
  int matches = 0;
  int correct = 0;
  /// Percent of correct matches; nullopt when there are no matches.
  std::optional<double> accuracy() const;
  bool operator==(const MatchScore&) const = default;
};

/// Mutual nearest neighbours in Hamming distance with a 0.8 ratio test
/// (forward direction); a match is correct when its surface points are
/// closer than correct_mm.
MatchScore match_and_score(const FeatureSet& a, const FeatureSet& b, double correct_mm = 1.0, double ratio = 0.8);

struct OrbResult {
  int k = 1;
  int pairs = 0;
  int defined_pairs = 0;          // pairs with at least one match
  std::optional<double> accuracy; // mean of defined per-pair accuracies, %
  double correct_per_pair = 0;    // mean over all pairs
  std::vector<MatchScore> per_pair;

  bool operator==(const OrbResult&) const = default;
};

/// ORB-k over all (t, t+k) pairs. Requires seq.size() > k.
OrbResult orb_k(const std::vector<Image>& seq, const std::vector<RayBuffer>& bufs, int k,
                const OrbConfig& cfg = {});
/// Same aggregation over precomputed feature sets.
OrbResult orb_k(const std::vector<FeatureSet>& features, int k);

/// 1-based partner of frame t in the extended sequence 1..T,T..1 at gap k:
/// 2T - t - (k - 1). Its view is frame t + k. Throws ContractViolation when
/// t + k > T or t < 1.
int revisit_partner(int t, int T, int k);

/// Frames 1..2T of the extended sequence (second half re-rendered in reverse
/// view order) compared as (t, revisit_partner(t, T, k)) for t = 1..T-k.
OrbResult revisit_protocol(const std::vector<Image>& extended, const std::vector<RayBuffer>& extended_bufs, int k,
                           const OrbConfig& cfg = {});
OrbResult revisit_protocol(const std::vector<FeatureSet>& extended, int k);

/// Extended view order 1..T,T..1 (0-based indices into the forward sequence).
std::vector<int> revisit_order(int T);

// ------------------------------------------------------------------ report

struct ConsistencyReport {
  std::string sequence_id;
  double of_error = 0;
  std::vector<OrbResult> per_k;    // k = 1, 5, 10 (those with T > k)
  std::vector<OrbResult> revisit;  // empty unless requested
};
void to_json(nlohmann::json& j, const ConsistencyReport& r);
/// Flat rows: sequence_id,variant,k,accuracy,correct_per_pair,pairs,defined_pairs
std::string report_csv(const ConsistencyReport& r);

/// Ray buffers and consecutive GT flow of a camera sequence.
struct SequenceGeometry {
  std::vector<RayBuffer> bufs;
  std::vector<FlowField> gt_flow;  // size T - 1
};
SequenceGeometry sequence_geometry(const Scene& scene, const std::vector<CameraView>& cams);

/// Full report. `extended`, when given, holds the 2T revisit frames.
ConsistencyReport evaluate_sequence(const std::string& id, const std::vector<Image>& frames,
                                    const SequenceGeometry& geo, const std::vector<Image>* extended = nullptr,
                                    const OrbConfig& orb = {}, const BlockMatchConfig& flow = {});

/// A renderer that is not a pure function of the view: frame n carries a
/// per-pixel random walk of n Gaussian steps (sigma_step each), so the
/// discrepancy between two frames grows with their time distance.
Image drift_noise_frame(const Image& clean, int n, double sigma_step, std::uint64_t seed);

/// Gaussian blur with a separable kernel (radius ceil(3 sigma)), edges clamped.
Image gaussian_blur(const Image& img, double sigma);

}  // namespace neurtex
