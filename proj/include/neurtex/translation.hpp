// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "neurtex/autodiff/adam.hpp"
#include "neurtex/autodiff/ops.hpp"

namespace neurtex {

/// Desk-scale shared-content translation networks.
struct ArchConfig {
  int ref_channels = 3;  // RGB part of domain A
  int tex_channels = 3;  // N texture features fed to E_A and predicted by G_A; 0 disables textures
  int base = 8;          // width of the first encoder stage
  int downsample = 2;    // stride-2 stages; content channels = base * 2^downsample
  int res_blocks = 2;
  int dis_base = 16;
  int dis_layers = 2;    // stride-2 layers per discriminator scale
  int dis_scales = 2;

  int domain_a_channels() const { return ref_channels + tex_channels; }
  int content_channels() const { return base << downsample; }
};
void to_json(nlohmann::json& j, const ArchConfig& c);
void from_json(const nlohmann::json& j, ArchConfig& c);

/// E_A, E_B, G_A, G_B share one parameter store; D_A, D_B another.
template <class T>
class TranslationCycle {
 public:
  using Tensor = ad::Tensor<T>;

  TranslationCycle(const ArchConfig& cfg, std::uint64_t seed);

  const ArchConfig& config() const { return cfg_; }
  ad::ParamStore<T>& generator() { return gen_; }
  ad::ParamStore<T>& discriminator() { return dis_; }
  const ad::ParamStore<T>& generator() const { return gen_; }
  const ad::ParamStore<T>& discriminator() const { return dis_; }

  Tensor encode_a(const Tensor& a) const { return encode("E_A", a, cfg_.domain_a_channels()); }
  Tensor encode_b(const Tensor& b) const { return encode("E_B", b, 3); }
  Tensor decode_a(const Tensor& c) const { return decode("G_A", c); }
  Tensor decode_b(const Tensor& c) const { return decode("G_B", c); }
  /// Patch score maps, one per scale (full resolution first).
  std::vector<Tensor> discriminate_a(const Tensor& a) const { return discriminate("D_A", a, cfg_.domain_a_channels()); }
  std::vector<Tensor> discriminate_b(const Tensor& b) const { return discriminate("D_B", b, 3); }

 private:
  Tensor conv(const std::string& name, const Tensor& x, int stride, int pad, const ad::ParamStore<T>& store) const;
  Tensor encode(const std::string& net, const Tensor& x, int channels) const;
  Tensor decode(const std::string& net, const Tensor& c) const;
  std::vector<Tensor> discriminate(const std::string& net, const Tensor& x, int channels) const;
  void build_encoder(const std::string& net, int in, Rng& rng);
  void build_decoder(const std::string& net, int out, Rng& rng);
  void build_discriminator(const std::string& net, int in, Rng& rng);
  void add_conv(ad::ParamStore<T>& store, const std::string& name, int cout, int cin, int k, Rng& rng);

  ArchConfig cfg_;
  ad::ParamStore<T> gen_, dis_;
};

template <class T>
struct CycleA {
  ad::Tensor<T> b_hat, content, content_rec, a_cyc, a_rec;
};
template <class T>
struct CycleB {
  ad::Tensor<T> a_hat, content, content_rec, b_cyc, b_rec;
};

/// a: (1, 3+N, H, W) domain-A input (texture channels first, then the
/// reference image in [-1, 1]). a -> E_A -> c -> G_B -> b_hat -> E_B -> c_rec -> G_A.
template <class T>
CycleA<T> forward_cycle_a(const TranslationCycle<T>& net, const ad::Tensor<T>& a);
/// b: (1, 3, H, W) in [-1, 1]. b -> E_B -> c -> G_A -> a_hat -> E_A -> c_rec -> G_B.
template <class T>
CycleB<T> forward_cycle_b(const TranslationCycle<T>& net, const ad::Tensor<T>& b);

/// Mean over scales of mean((D(fake) - 1)^2).
template <class T>
ad::Tensor<T> loss_adv_gen(const std::vector<ad::Tensor<T>>& fake_scores);
/// Mean over scales of mean((D(real) - 1)^2) + mean(D(fake)^2).
template <class T>
ad::Tensor<T> loss_dis(const std::vector<ad::Tensor<T>>& real_scores, const std::vector<ad::Tensor<T>>& fake_scores);
/// Mean absolute error.
template <class T>
ad::Tensor<T> loss_l1(const ad::Tensor<T>& a, const ad::Tensor<T>& b);

/// MS-SSIM of single-channel images with values in [-1, 1] (dynamic range 2):
/// 11x11 Gaussian window (sigma 1.5), valid region, 2x average pooling
/// between scales, standard exponents renormalized to `scales`. Throws
/// ConfigError if the coarsest scale is smaller than the window.
template <class T>
ad::Tensor<T> ms_ssim(const ad::Tensor<T>& x, const ad::Tensor<T>& y, int scales);
template <class T>
ad::Tensor<T> loss_ms_ssim(const ad::Tensor<T>& x_gray, const ad::Tensor<T>& y_gray, int scales);
/// Standard MS-SSIM exponents for the first `scales` scales, summing to 1.
std::vector<double> ms_ssim_weights(int scales);

/// Maps network range [-1, 1] to [eps_c, 1] so RGB vectors are strictly positive.
template <class T>
ad::Tensor<T> to_angle_range(const ad::Tensor<T>& x, double eps_c = 1e-3);
/// Mean over mask pixels of the angle between RGB vectors of u and v
/// (both (1, 3, H, W), positive); 0 when the mask is empty. v is treated as
/// a constant by callers that pass a detached tensor.
template <class T>
ad::Tensor<T> loss_view_consistency(const ad::Tensor<T>& u, const ad::Tensor<T>& v,
                                    const std::vector<std::uint8_t>& mask, double clamp_delta = 1e-12);

struct LossWeights {
  double cyc = 10, rec = 10, content = 1, ssim_ab = 5, ssim_ba = 3, adv = 1;
  double vc = 20;
  long long vc_start = 10'000;  // lambda_vc is 0 before this step
  int ssim_scales = 3;

  double lambda_vc(long long step) const { return step >= vc_start ? vc : 0.0; }
};
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

template <class T>
struct GeneratorLosses {
  ad::Tensor<T> adv, cyc, rec, content, ssim_ab, ssim_ba, vc, total;
};

/// Inputs of one generator update. `warped_j` is warp_image of the
/// view-j translation in angle range (constant), `match` the per-pixel match set.
template <class T>
struct GeneratorInputs {
  ad::Tensor<T> a_i;  // (1, 3+N, H, W)
  ad::Tensor<T> b;    // (1, 3, H, W)
  ad::Tensor<T> warped_j;
  std::vector<std::uint8_t> match;
};

/// L_total = L_translation + lambda_vc * L_vc, with every term weighted. Also
/// returns the cycle outputs so the discriminator step can reuse the fakes.
template <class T>
GeneratorLosses<T> generator_losses(const TranslationCycle<T>& net, const GeneratorInputs<T>& in,
                                    const LossWeights& w, double lambda_vc, CycleA<T>* cycle_a = nullptr,
                                    CycleB<T>* cycle_b = nullptr);

/// adv * (loss_dis(D_A) + loss_dis(D_B)) on detached fakes.
template <class T>
ad::Tensor<T> discriminator_loss(const TranslationCycle<T>& net, const ad::Tensor<T>& a_real, const ad::Tensor<T>& b_real,
                                 const ad::Tensor<T>& a_fake, const ad::Tensor<T>& b_fake, const LossWeights& w);

}  // namespace neurtex
