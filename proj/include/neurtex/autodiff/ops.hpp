// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "neurtex/autodiff/tensor.hpp"

namespace neurtex::ad {

/// While alive, new ops record no graph (forward-only evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Convolution. weight: (C_out, C_in, k, k); bias: (1, C_out, 1, 1) or
// undefined. Reflect padding of `pad` pixels on every side.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad);

/// Nearest-neighbor x2 upsampling.
template <class T>
Tensor<T> upsample2(const Tensor<T>& x);

/// Per-sample, per-channel normalization, no affine parameters.
template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, double eps = 1e-5);

template <class T>
Tensor<T> relu(const Tensor<T>& x);
template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope = 0.2);
template <class T>
Tensor<T> tanh(const Tensor<T>& x);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, double s);
template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, double s);
/// x^p for x > 0.
template <class T>
Tensor<T> pow_scalar(const Tensor<T>& x, double p);

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);
/// Channels [begin, end).
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int end);

template <class T>
Tensor<T> sum(const Tensor<T>& x);
template <class T>
Tensor<T> mean(const Tensor<T>& x);
/// Mean over elements whose mask entry is nonzero; 0 when the mask is empty.
template <class T>
Tensor<T> masked_mean(const Tensor<T>& x, const std::vector<std::uint8_t>& mask);

template <class T>
Tensor<T> abs(const Tensor<T>& x);
template <class T>
Tensor<T> square(const Tensor<T>& x);
template <class T>
Tensor<T> sqrt(const Tensor<T>& x);
template <class T>
Tensor<T> acos(const Tensor<T>& x);
/// Gradient passes where lo <= x <= hi.
template <class T>
Tensor<T> clamp(const Tensor<T>& x, double lo, double hi);

/// 3 channels -> 1 with weights 0.299, 0.587, 0.114.
template <class T>
Tensor<T> grayscale(const Tensor<T>& x);
/// 2x2 mean pooling, stride 2 (odd trailing rows/columns dropped).
template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x);
/// Per-pixel inner product over channels -> (N, 1, H, W).
template <class T>
Tensor<T> dot_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Per-pixel Euclidean norm over channels -> (N, 1, H, W).
template <class T>
Tensor<T> norm_channels(const Tensor<T>& x);
/// Per-pixel angle between channel vectors, acos of the cosine clamped to
/// [-1 + delta, 1 - delta], evaluated in double -> (N, 1, H, W). Pixels where
/// either vector is zero get angle 0 and no gradient.
template <class T>
Tensor<T> angle_channels(const Tensor<T>& a, const Tensor<T>& b, double delta);
/// Separable normalized Gaussian, per channel, valid region only.
template <class T>
Tensor<T> gaussian_blur_valid(const Tensor<T>& x, int size, double sigma);

/// out[p, :] = sum_k weight[p][k] * src[offset[p][k] + :] over the channel
/// axis of a (1, C, H, W) result; src is a flat parameter vector. A generic
/// sparse linear gather used for texture projection.
struct GatherPlan {
  int height = 0, width = 0, channels = 0;
  std::vector<std::uint32_t> pixel_begin;  // size H*W + 1
  std::vector<std::size_t> offset;
  std::vector<double> weight;
};
template <class T>
Tensor<T> sparse_gather(const Tensor<T>& src, const GatherPlan& plan);

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T>
Tensor<T> operator*(double s, const Tensor<T>& x) { return mul_scalar(x, s); }

}  // namespace neurtex::ad
