// SPDX-License-Identifier: Apache-2.0
#include "neurtex/translation.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

namespace neurtex {

using namespace ad;

void to_json(nlohmann::json& j, const ArchConfig& c) {
  j = {{"ref_channels", c.ref_channels}, {"tex_channels", c.tex_channels}, {"base", c.base},
       {"downsample", c.downsample},     {"res_blocks", c.res_blocks},     {"dis_base", c.dis_base},
       {"dis_layers", c.dis_layers},     {"dis_scales", c.dis_scales}};
}

void from_json(const nlohmann::json& j, ArchConfig& c) {
  c.ref_channels = j.value("ref_channels", c.ref_channels);
  c.tex_channels = j.value("tex_channels", c.tex_channels);
  c.base = j.value("base", c.base);
  c.downsample = j.value("downsample", c.downsample);
  c.res_blocks = j.value("res_blocks", c.res_blocks);
  c.dis_base = j.value("dis_base", c.dis_base);
  c.dis_layers = j.value("dis_layers", c.dis_layers);
  c.dis_scales = j.value("dis_scales", c.dis_scales);
  if (c.ref_channels != 3 || c.tex_channels < 0 || c.base < 1 || c.downsample < 0 || c.res_blocks < 0 ||
      c.dis_base < 1 || c.dis_layers < 1 || c.dis_scales < 1)
    throw ConfigError("arch: invalid architecture configuration");
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"cyc", w.cyc},         {"rec", w.rec}, {"content", w.content}, {"ssim_ab", w.ssim_ab},
       {"ssim_ba", w.ssim_ba}, {"adv", w.adv}, {"vc", w.vc},           {"vc_start", w.vc_start},
       {"ssim_scales", w.ssim_scales}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w.cyc = j.value("cyc", w.cyc);
  w.rec = j.value("rec", w.rec);
  w.content = j.value("content", w.content);
  w.ssim_ab = j.value("ssim_ab", w.ssim_ab);
  w.ssim_ba = j.value("ssim_ba", w.ssim_ba);
  w.adv = j.value("adv", w.adv);
  w.vc = j.value("vc", w.vc);
  w.vc_start = j.value("vc_start", w.vc_start);
  w.ssim_scales = j.value("ssim_scales", w.ssim_scales);
  for (double v : {w.cyc, w.rec, w.content, w.ssim_ab, w.ssim_ba, w.adv, w.vc})
    if (!(v >= 0)) throw ConfigError("weights: loss weights must be >= 0");
  if (w.vc_start < 0) throw ConfigError("weights: vc_start must be >= 0");
  if (w.ssim_scales < 1 || w.ssim_scales > 5) throw ConfigError("weights: ssim_scales must be in 1..5");
}

template <class T>
void TranslationCycle<T>::add_conv(ParamStore<T>& store, const std::string& name, int cout, int cin, int k, Rng& rng) {
  store.add_conv_weight(name + ".w", cout, cin, k, rng);
  store.add_zeros(name + ".b", {1, cout, 1, 1});
}

template <class T>
void TranslationCycle<T>::build_encoder(const std::string& net, int in, Rng& rng) {
  int ch = cfg_.base;
  add_conv(gen_, net + ".in", ch, in, 7, rng);
  for (int d = 0; d < cfg_.downsample; ++d, ch *= 2) add_conv(gen_, net + ".down" + std::to_string(d), ch * 2, ch, 4, rng);
  for (int r = 0; r < cfg_.res_blocks; ++r) {
    add_conv(gen_, net + ".res" + std::to_string(r) + ".a", ch, ch, 3, rng);
    add_conv(gen_, net + ".res" + std::to_string(r) + ".b", ch, ch, 3, rng);
  }
}

template <class T>
void TranslationCycle<T>::build_decoder(const std::string& net, int out, Rng& rng) {
  int ch = cfg_.content_channels();
  for (int r = 0; r < cfg_.res_blocks; ++r) {
    add_conv(gen_, net + ".res" + std::to_string(r) + ".a", ch, ch, 3, rng);
    add_conv(gen_, net + ".res" + std::to_string(r) + ".b", ch, ch, 3, rng);
  }
  for (int u = 0; u < cfg_.downsample; ++u, ch /= 2) add_conv(gen_, net + ".up" + std::to_string(u), ch / 2, ch, 3, rng);
  add_conv(gen_, net + ".out", out, ch, 7, rng);
}

template <class T>
void TranslationCycle<T>::build_discriminator(const std::string& net, int in, Rng& rng) {
  for (int s = 0; s < cfg_.dis_scales; ++s) {
    const std::string p = net + ".s" + std::to_string(s);
    int ch = in;
    for (int l = 0; l < cfg_.dis_layers; ++l) {
      const int next = cfg_.dis_base << l;
      add_conv(dis_, p + ".c" + std::to_string(l), next, ch, 4, rng);
      ch = next;
    }
    add_conv(dis_, p + ".score", 1, ch, 1, rng);
  }
}

template <class T>
TranslationCycle<T>::TranslationCycle(const ArchConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(derive_seed(seed, {0xa7c4}));
  build_encoder("E_A", cfg_.domain_a_channels(), rng);
  build_encoder("E_B", 3, rng);
  build_decoder("G_A", cfg_.domain_a_channels(), rng);
  build_decoder("G_B", 3, rng);
  build_discriminator("D_A", cfg_.domain_a_channels(), rng);
  build_discriminator("D_B", 3, rng);
}

template <class T>
Tensor<T> TranslationCycle<T>::conv(const std::string& name, const Tensor& x, int stride, int pad,
                                    const ParamStore<T>& store) const {
  return conv2d(x, store.get(name + ".w"), store.get(name + ".b"), stride, pad);
}

template <class T>
Tensor<T> TranslationCycle<T>::encode(const std::string& net, const Tensor& x, int channels) const {
  if (x.shape().c != channels)
    throw ContractViolation(net + ": expected " + std::to_string(channels) + " channels, got " + x.shape().str());
  Tensor h = relu(instance_norm(conv(net + ".in", x, 1, 3, gen_)));
  for (int d = 0; d < cfg_.downsample; ++d) h = relu(instance_norm(conv(net + ".down" + std::to_string(d), h, 2, 1, gen_)));
  for (int r = 0; r < cfg_.res_blocks; ++r) {
    const std::string p = net + ".res" + std::to_string(r);
    Tensor y = relu(instance_norm(conv(p + ".a", h, 1, 1, gen_)));
    h = add(h, instance_norm(conv(p + ".b", y, 1, 1, gen_)));
  }
  return h;
}

template <class T>
Tensor<T> TranslationCycle<T>::decode(const std::string& net, const Tensor& c) const {
  if (c.shape().c != cfg_.content_channels())
    throw ContractViolation(net + ": content code " + c.shape().str() + " has the wrong channel count");
  Tensor h = c;
  for (int r = 0; r < cfg_.res_blocks; ++r) {
    const std::string p = net + ".res" + std::to_string(r);
    Tensor y = relu(instance_norm(conv(p + ".a", h, 1, 1, gen_)));
    h = add(h, instance_norm(conv(p + ".b", y, 1, 1, gen_)));
  }
  for (int u = 0; u < cfg_.downsample; ++u)
    h = relu(instance_norm(conv(net + ".up" + std::to_string(u), upsample2(h), 1, 1, gen_)));
  return tanh(conv(net + ".out", h, 1, 3, gen_));
}

template <class T>
std::vector<Tensor<T>> TranslationCycle<T>::discriminate(const std::string& net, const Tensor& x, int channels) const {
  if (x.shape().c != channels)
    throw ContractViolation(net + ": expected " + std::to_string(channels) + " channels, got " + x.shape().str());
  std::vector<Tensor> out;
  Tensor input = x;
  for (int s = 0; s < cfg_.dis_scales; ++s) {
    if (s > 0) input = avg_pool2(input);
    const std::string p = net + ".s" + std::to_string(s);
    Tensor h = input;
    for (int l = 0; l < cfg_.dis_layers; ++l) h = leaky_relu(conv(p + ".c" + std::to_string(l), h, 2, 1, dis_), 0.2);
    out.push_back(conv(p + ".score", h, 1, 0, dis_));
  }
  return out;
}

template <class T>
CycleA<T> forward_cycle_a(const TranslationCycle<T>& net, const Tensor<T>& a) {
  CycleA<T> r;
  r.content = net.encode_a(a);
  r.b_hat = net.decode_b(r.content);
  r.content_rec = net.encode_b(r.b_hat);
  r.a_cyc = net.decode_a(r.content_rec);
  r.a_rec = net.decode_a(r.content);
  return r;
}

template <class T>
CycleB<T> forward_cycle_b(const TranslationCycle<T>& net, const Tensor<T>& b) {
  CycleB<T> r;
  r.content = net.encode_b(b);
  r.a_hat = net.decode_a(r.content);
  r.content_rec = net.encode_a(r.a_hat);
  r.b_cyc = net.decode_b(r.content_rec);
  r.b_rec = net.decode_b(r.content);
  return r;
}

template <class T>
Tensor<T> loss_adv_gen(const std::vector<Tensor<T>>& fake) {
  if (fake.empty()) throw ContractViolation("loss_adv_gen: no scales");
  Tensor<T> total;
  for (const auto& s : fake) {
    Tensor<T> term = mean(square(add_scalar(s, -1.0)));
    total = total.defined() ? add(total, term) : term;
  }
  return mul_scalar(total, 1.0 / static_cast<double>(fake.size()));
}

template <class T>
Tensor<T> loss_dis(const std::vector<Tensor<T>>& real, const std::vector<Tensor<T>>& fake) {
  if (real.size() != fake.size() || real.empty()) throw ContractViolation("loss_dis: scale count mismatch");
  Tensor<T> total;
  for (std::size_t k = 0; k < real.size(); ++k) {
    Tensor<T> term = add(mean(square(add_scalar(real[k], -1.0))), mean(square(fake[k])));
    total = total.defined() ? add(total, term) : term;
  }
  return mul_scalar(total, 1.0 / static_cast<double>(real.size()));
}

template <class T>
Tensor<T> loss_l1(const Tensor<T>& a, const Tensor<T>& b) {
  return mean(abs(sub(a, b)));
}

std::vector<double> ms_ssim_weights(int scales) {
  static constexpr double kStandard[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  if (scales < 1 || scales > 5) throw ConfigError("ms_ssim: scales must be in 1..5");
  std::vector<double> w(kStandard, kStandard + scales);
  double total = 0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

template <class T>
Tensor<T> ms_ssim(const Tensor<T>& x, const Tensor<T>& y, int scales) {
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5, kRange = 2.0;
  const double c1 = (0.01 * kRange) * (0.01 * kRange), c2 = (0.03 * kRange) * (0.03 * kRange);
  if (!(x.shape() == y.shape()) || x.shape().c != 1)
    throw ContractViolation("ms_ssim: expected equal single-channel shapes, got " + x.shape().str() + " and " +
                            y.shape().str());
  const int min_side = std::min(x.shape().h, x.shape().w) >> (scales - 1);
  if (min_side < kWindow)
    throw ConfigError("ms_ssim: " + std::to_string(scales) + " scales need a min side of " +
                      std::to_string(kWindow << (scales - 1)) + " px, image is " + x.shape().str());
  const auto weights = ms_ssim_weights(scales);
  Tensor<T> xs = x, ys = y, result;
  for (int l = 0; l < scales; ++l) {
    if (l > 0) {
      xs = avg_pool2(xs);
      ys = avg_pool2(ys);
    }
    auto blur = [&](const Tensor<T>& t) { return gaussian_blur_valid(t, kWindow, kSigma); };
    const Tensor<T> mx = blur(xs), my = blur(ys);
    const Tensor<T> mxx = mul(mx, mx), myy = mul(my, my), mxy = mul(mx, my);
    const Tensor<T> sxx = sub(blur(mul(xs, xs)), mxx);
    const Tensor<T> syy = sub(blur(mul(ys, ys)), myy);
    const Tensor<T> sxy = sub(blur(mul(xs, ys)), mxy);
    const Tensor<T> cs_map = div(add_scalar(mul_scalar(sxy, 2.0), c2), add_scalar(add(sxx, syy), c2));
    Tensor<T> term;
    if (l + 1 < scales) {
      term = mean(cs_map);
    } else {
      const Tensor<T> lum = div(add_scalar(mul_scalar(mxy, 2.0), c1), add_scalar(add(mxx, myy), c1));
      term = mean(mul(lum, cs_map));
    }
    term = pow_scalar(clamp(term, 1e-4, 1e30), weights[static_cast<std::size_t>(l)]);
    result = result.defined() ? mul(result, term) : term;
  }
  return result;
}

template <class T>
Tensor<T> loss_ms_ssim(const Tensor<T>& x, const Tensor<T>& y, int scales) {
  return add_scalar(mul_scalar(ms_ssim(x, y, scales), -1.0), 1.0);
}

template <class T>
Tensor<T> to_angle_range(const Tensor<T>& x, double eps_c) {
  // [-1, 1] -> [eps_c, 1]
  return add_scalar(mul_scalar(x, 0.5 * (1.0 - eps_c)), 0.5 * (1.0 - eps_c) + eps_c);
}

template <class T>
Tensor<T> loss_view_consistency(const Tensor<T>& u, const Tensor<T>& v, const std::vector<std::uint8_t>& mask,
                                double clamp_delta) {
  if (!(u.shape() == v.shape())) throw ContractViolation("loss_view_consistency: shape mismatch " + u.shape().str() + " vs " + v.shape().str());
  if (mask.size() != u.shape().plane() * static_cast<std::size_t>(u.shape().n))
    throw ContractViolation("loss_view_consistency: mask size does not match " + u.shape().str());
  if (v.requires_grad()) throw ContractViolation("loss_view_consistency: the warped view must be a constant");
  // Unmatched pixels are replaced by u itself so norms never vanish; the
  // mask removes them from the mean.
  std::vector<T> vv = v.value();
  const std::size_t m = u.shape().plane();
  const int ch = u.shape().c;
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (!mask[p]) {
      const std::size_t n = p / m, q = p % m;
      for (int c = 0; c < ch; ++c) {
        const std::size_t k = (n * ch + c) * m + q;
        vv[k] = u.value()[k] > T(0) ? u.value()[k] : T(1);
      }
    }
  const Tensor<T> vt = Tensor<T>::leaf(v.shape(), std::move(vv));
  return masked_mean(angle_channels(u, vt, clamp_delta), mask);
}

template <class T>
GeneratorLosses<T> generator_losses(const TranslationCycle<T>& net, const GeneratorInputs<T>& in, const LossWeights& w,
                                    double lambda_vc, CycleA<T>* cycle_a, CycleB<T>* cycle_b) {
  const auto& cfg = net.config();
  const CycleA<T> ca = forward_cycle_a(net, in.a_i);
  const CycleB<T> cb = forward_cycle_b(net, in.b);
  GeneratorLosses<T> L;
  L.adv = mul_scalar(add(loss_adv_gen(net.discriminate_b(ca.b_hat)), loss_adv_gen(net.discriminate_a(cb.a_hat))), w.adv);
  L.cyc = mul_scalar(add(loss_l1(in.a_i, ca.a_cyc), loss_l1(in.b, cb.b_cyc)), w.cyc);
  L.rec = mul_scalar(add(loss_l1(in.a_i, ca.a_rec), loss_l1(in.b, cb.b_rec)), w.rec);
  L.content = mul_scalar(add(loss_l1(ca.content, ca.content_rec), loss_l1(cb.content, cb.content_rec)), w.content);
  const int nt = cfg.tex_channels, na = cfg.domain_a_channels();
  const Tensor<T> a_ref = nt > 0 ? slice_channels(in.a_i, nt, na) : in.a_i;
  const Tensor<T> a_hat_ref = nt > 0 ? slice_channels(cb.a_hat, nt, na) : cb.a_hat;
  L.ssim_ab = mul_scalar(loss_ms_ssim(grayscale(a_ref), grayscale(ca.b_hat), w.ssim_scales), w.ssim_ab);
  L.ssim_ba = mul_scalar(loss_ms_ssim(grayscale(in.b), grayscale(a_hat_ref), w.ssim_scales), w.ssim_ba);
  if (lambda_vc > 0 && in.warped_j.defined())
    L.vc = mul_scalar(loss_view_consistency(to_angle_range(ca.b_hat), in.warped_j, in.match), lambda_vc);
  else
    L.vc = Tensor<T>::scalar(T(0));
  L.total = add(add(add(add(add(add(L.adv, L.cyc), L.rec), L.content), L.ssim_ab), L.ssim_ba), L.vc);
  if (cycle_a) *cycle_a = ca;
  if (cycle_b) *cycle_b = cb;
  return L;
}

template <class T>
Tensor<T> discriminator_loss(const TranslationCycle<T>& net, const Tensor<T>& a_real, const Tensor<T>& b_real,
                             const Tensor<T>& a_fake, const Tensor<T>& b_fake, const LossWeights& w) {
  const Tensor<T> da = loss_dis(net.discriminate_a(a_real.detach()), net.discriminate_a(a_fake.detach()));
  const Tensor<T> db = loss_dis(net.discriminate_b(b_real.detach()), net.discriminate_b(b_fake.detach()));
  return mul_scalar(add(da, db), w.adv);
}

#define NEURTEX_INSTANTIATE(T)                                                                                    \
  template class TranslationCycle<T>;                                                                             \
  template CycleA<T> forward_cycle_a(const TranslationCycle<T>&, const Tensor<T>&);                              \
  template CycleB<T> forward_cycle_b(const TranslationCycle<T>&, const Tensor<T>&);                              \
  template Tensor<T> loss_adv_gen(const std::vector<Tensor<T>>&);                                                 \
  template Tensor<T> loss_dis(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&);                      \
  template Tensor<T> loss_l1(const Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> ms_ssim(const Tensor<T>&, const Tensor<T>&, int);                                            \
  template Tensor<T> loss_ms_ssim(const Tensor<T>&, const Tensor<T>&, int);                                       \
  template Tensor<T> to_angle_range(const Tensor<T>&, double);                                                    \
  template Tensor<T> loss_view_consistency(const Tensor<T>&, const Tensor<T>&, const std::vector<std::uint8_t>&,  \
                                           double);                                                               \
  template GeneratorLosses<T> generator_losses(const TranslationCycle<T>&, const GeneratorInputs<T>&,            \
                                               const LossWeights&, double, CycleA<T>*, CycleB<T>*);              \
  template Tensor<T> discriminator_loss(const TranslationCycle<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                        const Tensor<T>&, const Tensor<T>&, const LossWeights&);

NEURTEX_INSTANTIATE(float)
NEURTEX_INSTANTIATE(double)

}  // namespace neurtex
