// SPDX-License-Identifier: Apache-2.0
#include "neurtex/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace neurtex::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// C (m x n) = or += A (m x d) * B (d x n). Eigen's blocked GEMM gives results
// independent of buffer alignment; its matrix-vector and coefficient-wise
// fallbacks (a single row or column, or tiny sizes) do not, so those use a
// plain loop.
template <class T, class EA, class EB, class FA, class FB>
void matmul(T* c, Eigen::Index m, Eigen::Index n, Eigen::Index d, const EA& ea, const EB& eb, FA fa, FB fb,
            bool accumulate) {
  if (m >= 2 && n >= 2 && d >= 2 && m + n + d >= 24) {
    MapMat<T> cm(c, m, n);
    if (accumulate)
      cm.noalias() += ea * eb;
    else
      cm.noalias() = ea * eb;
    return;
  }
  std::vector<T> row(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), T(0));
    for (Eigen::Index l = 0; l < d; ++l) {
      const T a = fa(i, l);
      for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] += a * fb(l, j);
    }
    T* ci = c + i * n;
    for (Eigen::Index j = 0; j < n; ++j) ci[j] = accumulate ? ci[j] + row[static_cast<std::size_t>(j)] : row[static_cast<std::size_t>(j)];
  }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ContractViolation(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <class T>
bool wants(const Node<T>& n, std::size_t i) {
  return n.parents[i]->requires_grad;
}

constexpr double kw[3] = {0.299, 0.587, 0.114};

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

// Elementwise unary op: f gives the value, df the derivative from (x, y).
template <class T, class F, class DF>
Tensor<T> unary(const char* name, const Tensor<T>& x, F f, DF df) {
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_op<T>(name, x.shape(), std::move(out), {x}, [df](Node<T>& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * df(p.value[i], self.value[i]);
  });
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad) {
  const Shape xs = x.shape(), ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w)
    throw ContractViolation("conv2d: input " + xs.str() + " incompatible with weight " + ws.str());
  if (bias.defined() && bias.size() != static_cast<std::size_t>(ws.n))
    throw ContractViolation("conv2d: bias " + bias.shape().str() + " for " + std::to_string(ws.n) + " outputs");
  if (stride < 1 || pad < 0 || (pad >= xs.h && xs.h > 1) || (pad >= xs.w && xs.w > 1))
    throw ContractViolation("conv2d: bad stride/padding for input " + xs.str());
  const int k = ws.h, cin = xs.c, cout = ws.n;
  const int ho = (xs.h + 2 * pad - k) / stride + 1, wo = (xs.w + 2 * pad - k) / stride + 1;
  if (ho < 1 || wo < 1) throw ContractViolation("conv2d: kernel larger than padded input " + xs.str());
  const std::size_t kk = static_cast<std::size_t>(cin) * k * k, pp = static_cast<std::size_t>(ho) * wo;

  // Reflected source row/column for every (kernel tap, output position).
  auto iy = std::make_shared<std::vector<int>>(static_cast<std::size_t>(k) * ho);
  auto ix = std::make_shared<std::vector<int>>(static_cast<std::size_t>(k) * wo);
  for (int t = 0; t < k; ++t) {
    for (int o = 0; o < ho; ++o) (*iy)[static_cast<std::size_t>(t) * ho + o] = reflect(o * stride + t - pad, xs.h);
    for (int o = 0; o < wo; ++o) (*ix)[static_cast<std::size_t>(t) * wo + o] = reflect(o * stride + t - pad, xs.w);
  }
  // Output columns [lo, hi) of tap kx read src[ox * stride + kx - pad] without reflection.
  std::vector<int> lo(static_cast<std::size_t>(k)), hi(static_cast<std::size_t>(k));
  for (int t = 0; t < k; ++t) {
    int a = 0;
    while (a < wo && a * stride + t - pad < 0) ++a;
    int b = a;
    while (b < wo && b * stride + t - pad < xs.w) ++b;
    lo[static_cast<std::size_t>(t)] = a;
    hi[static_cast<std::size_t>(t)] = b;
  }
  std::shared_ptr<T[]> cols(new T[static_cast<std::size_t>(xs.n) * kk * pp]);
  std::vector<T> out(static_cast<std::size_t>(xs.n) * cout * pp);
  const auto& xv = x.value();
  for (int n = 0; n < xs.n; ++n) {
    T* col = cols.get() + static_cast<std::size_t>(n) * kk * pp;
    const T* img = xv.data() + static_cast<std::size_t>(n) * cin * xs.plane();
    for (int c = 0; c < cin; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * pp;
          const int* rx = ix->data() + static_cast<std::size_t>(kx) * wo;
          const int a = lo[static_cast<std::size_t>(kx)], b = hi[static_cast<std::size_t>(kx)];
          for (int oy = 0; oy < ho; ++oy) {
            const T* src = img + (static_cast<std::size_t>(c) * xs.h + (*iy)[static_cast<std::size_t>(ky) * ho + oy]) * xs.w;
            T* dst = row + static_cast<std::size_t>(oy) * wo;
            for (int ox = 0; ox < a; ++ox) dst[ox] = src[rx[ox]];
            if (a < b) {
              const T* run = src + (a * stride + kx - pad);
              if (stride == 1)
                std::copy(run, run + (b - a), dst + a);
              else
                for (int ox = a; ox < b; ++ox) dst[ox] = run[(ox - a) * stride];
            }
            for (int ox = b; ox < wo; ++ox) dst[ox] = src[rx[ox]];
          }
        }
    T* o = out.data() + static_cast<std::size_t>(n) * cout * pp;
    const T* wv = weight.value().data();
    const auto ekk = static_cast<Eigen::Index>(kk), epp = static_cast<Eigen::Index>(pp);
    matmul(o, cout, epp, ekk, ConstMapMat<T>(wv, cout, ekk), ConstMapMat<T>(col, ekk, epp),
           [wv, kk](auto i, auto l) { return wv[static_cast<std::size_t>(i) * kk + l]; },
           [col, pp](auto l, auto j) { return col[static_cast<std::size_t>(l) * pp + j]; }, false);
    if (bias.defined())
      for (int c = 0; c < cout; ++c) {
        const T b = bias.value()[static_cast<std::size_t>(c)];
        for (std::size_t q = 0; q < pp; ++q) o[static_cast<std::size_t>(c) * pp + q] += b;
      }
  }
  std::vector<Tensor<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op<T>(
      "conv2d", {xs.n, cout, ho, wo}, std::move(out), parents,
      [=](Node<T>& self) {
        const Node<T>& wn = *self.parents[1];
        for (int n = 0; n < xs.n; ++n) {
          const T* gp = self.grad.data() + static_cast<std::size_t>(n) * cout * pp;
          const auto ekk = static_cast<Eigen::Index>(kk), epp = static_cast<Eigen::Index>(pp);
          ConstMapMat<T> g(gp, cout, epp);
          const T* col = cols.get() + static_cast<std::size_t>(n) * kk * pp;
          if (wants(self, 1))
            matmul(self.parents[1]->grad.data(), cout, ekk, epp, g, ConstMapMat<T>(col, ekk, epp).transpose(),
                   [gp, pp](auto i, auto l) { return gp[static_cast<std::size_t>(i) * pp + l]; },
                   [col, pp](auto l, auto j) { return col[static_cast<std::size_t>(j) * pp + l]; }, true);
          if (has_bias && wants(self, 2)) {
            auto& bg = self.parents[2]->grad;
            for (int c = 0; c < cout; ++c) {
              T acc = T(0);
              for (std::size_t q = 0; q < pp; ++q) acc += gp[static_cast<std::size_t>(c) * pp + q];
              bg[static_cast<std::size_t>(c)] += acc;
            }
          }
          if (wants(self, 0)) {
            const T* wv = wn.value.data();
            RowMat<T> dcol(ekk, epp);
            matmul(dcol.data(), ekk, epp, static_cast<Eigen::Index>(cout), ConstMapMat<T>(wv, cout, ekk).transpose(), g,
                   [wv, kk](auto i, auto l) { return wv[static_cast<std::size_t>(l) * kk + i]; },
                   [gp, pp](auto l, auto j) { return gp[static_cast<std::size_t>(l) * pp + j]; }, false);
            T* dimg = self.parents[0]->grad.data() + static_cast<std::size_t>(n) * cin * xs.plane();
            for (int c = 0; c < cin; ++c)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const T* row = dcol.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * pp;
                  const int* rx = ix->data() + static_cast<std::size_t>(kx) * wo;
                  const int a = lo[static_cast<std::size_t>(kx)], b = hi[static_cast<std::size_t>(kx)];
                  for (int oy = 0; oy < ho; ++oy) {
                    T* dst = dimg + (static_cast<std::size_t>(c) * xs.h + (*iy)[static_cast<std::size_t>(ky) * ho + oy]) * xs.w;
                    const T* src = row + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < a; ++ox) dst[rx[ox]] += src[ox];
                    if (a < b) {
                      T* run = dst + (a * stride + kx - pad);
                      if (stride == 1)
                        Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(run, b - a) +=
                            Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(src + a, b - a);
                      else
                        for (int ox = a; ox < b; ++ox) run[(ox - a) * stride] += src[ox];
                    }
                    for (int ox = b; ox < wo; ++ox) dst[rx[ox]] += src[ox];
                  }
                }
          }
        }
      });
}

template <class T>
Tensor<T> upsample2(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape o{s.n, s.c, 2 * s.h, 2 * s.w};
  std::vector<T> out(o.size());
  const auto& xv = x.value();
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p)
    for (int y = 0; y < o.h; ++y)
      for (int xx = 0; xx < o.w; ++xx)
        out[(p * o.h + y) * o.w + xx] = xv[(p * s.h + y / 2) * s.w + xx / 2];
  return make_op<T>("upsample2", o, std::move(out), {x}, [s, o](Node<T>& self) {
    auto& g = self.parents[0]->grad;
    for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p)
      for (int y = 0; y < o.h; ++y)
        for (int xx = 0; xx < o.w; ++xx) g[(p * s.h + y / 2) * s.w + xx / 2] += self.grad[(p * o.h + y) * o.w + xx];
  });
}

template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, double eps) {
  const Shape s = x.shape();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c, m = s.plane();
  std::vector<T> out(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(planes);
  const auto& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv.data() + p * m;
    double mu = 0;
    for (std::size_t i = 0; i < m; ++i) mu += src[i];
    mu /= static_cast<double>(m);
    double var = 0;
    for (std::size_t i = 0; i < m; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[p] = static_cast<T>(is);
    for (std::size_t i = 0; i < m; ++i) out[p * m + i] = static_cast<T>((src[i] - mu) * is);
  }
  return make_op<T>("instance_norm", s, std::move(out), {x}, [planes, m, inv_std](Node<T>& self) {
    auto& g = self.parents[0]->grad;
    for (std::size_t p = 0; p < planes; ++p) {
      const T* dy = self.grad.data() + p * m;
      const T* y = self.value.data() + p * m;
      double mdy = 0, mdyy = 0;
      for (std::size_t i = 0; i < m; ++i) {
        mdy += dy[i];
        mdyy += static_cast<double>(dy[i]) * y[i];
      }
      mdy /= static_cast<double>(m);
      mdyy /= static_cast<double>(m);
      const double is = (*inv_std)[p];
      for (std::size_t i = 0; i < m; ++i) g[p * m + i] += static_cast<T>(is * (dy[i] - mdy - y[i] * mdyy));
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope) {
  const T a = static_cast<T>(slope);
  return unary<T>(
      "leaky_relu", x, [a](T v) { return v > T(0) ? v : a * v; }, [a](T v, T) { return v > T(0) ? T(1) : a; });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (wants(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[k]->grad[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    if (wants(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[0]->grad[i] += self.grad[i];
    if (wants(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) self.parents[1]->grad[i] -= self.grad[i];
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
  });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "div");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return make_op<T>("div", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] / pb.value[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i] * self.value[i] / pb.value[i];
  });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, double s) {
  const T c = static_cast<T>(s);
  return unary<T>(
      "add_scalar", x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, double s) {
  const T c = static_cast<T>(s);
  return unary<T>(
      "mul_scalar", x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <class T>
Tensor<T> pow_scalar(const Tensor<T>& x, double p) {
  for (T v : x.value())
    if (!(v > T(0))) throw ContractViolation("pow_scalar: non-positive base");
  const T e = static_cast<T>(p);
  return unary<T>(
      "pow_scalar", x, [e](T v) { return std::pow(v, e); }, [e](T v, T y) { return e * y / v; });
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractViolation("concat_channels: no inputs");
  Shape s = parts[0].shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape q = p.shape();
    if (q.n != s.n || q.h != s.h || q.w != s.w)
      throw ContractViolation("concat_channels: shape mismatch " + s.str() + " vs " + q.str());
    channels += q.c;
  }
  const Shape o{s.n, channels, s.h, s.w};
  std::vector<T> out(o.size());
  std::vector<int> offsets;
  int c0 = 0;
  for (const auto& p : parts) {
    offsets.push_back(c0);
    const int pc = p.shape().c;
    for (int n = 0; n < s.n; ++n)
      std::copy_n(p.value().data() + static_cast<std::size_t>(n) * pc * s.plane(), pc * s.plane(),
                  out.data() + (static_cast<std::size_t>(n) * channels + c0) * s.plane());
    c0 += pc;
  }
  return make_op<T>("concat_channels", o, std::move(out), parts, [o, offsets](Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const int pc = p.shape.c;
      for (int n = 0; n < o.n; ++n) {
        const T* src = self.grad.data() + (static_cast<std::size_t>(n) * o.c + offsets[k]) * o.plane();
        T* dst = p.grad.data() + static_cast<std::size_t>(n) * pc * o.plane();
        for (std::size_t i = 0; i < pc * o.plane(); ++i) dst[i] += src[i];
      }
    }
  });
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int end) {
  const Shape s = x.shape();
  if (begin < 0 || end > s.c || begin >= end)
    throw ContractViolation("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + s.str());
  const Shape o{s.n, end - begin, s.h, s.w};
  std::vector<T> out(o.size());
  for (int n = 0; n < s.n; ++n)
    std::copy_n(x.value().data() + (static_cast<std::size_t>(n) * s.c + begin) * s.plane(), o.c * s.plane(),
                out.data() + static_cast<std::size_t>(n) * o.c * s.plane());
  return make_op<T>("slice_channels", o, std::move(out), {x}, [s, o, begin](Node<T>& self) {
    auto& g = self.parents[0]->grad;
    for (int n = 0; n < s.n; ++n) {
      const T* src = self.grad.data() + static_cast<std::size_t>(n) * o.c * s.plane();
      T* dst = g.data() + (static_cast<std::size_t>(n) * s.c + begin) * s.plane();
      for (std::size_t i = 0; i < o.c * s.plane(); ++i) dst[i] += src[i];
    }
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.value()) acc += v;
  return make_op<T>("sum", {}, {static_cast<T>(acc)}, {x}, [](Node<T>& self) {
    for (auto& g : self.parents[0]->grad) g += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.value()) acc += v;
  const double n = static_cast<double>(x.size());
  return make_op<T>("mean", {}, {static_cast<T>(acc / n)}, {x}, [n](Node<T>& self) {
    const T g = static_cast<T>(self.grad[0] / n);
    for (auto& v : self.parents[0]->grad) v += g;
  });
}

template <class T>
Tensor<T> masked_mean(const Tensor<T>& x, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != x.size()) throw ContractViolation("masked_mean: mask size does not match " + x.shape().str());
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      acc += x.value()[i];
      ++count;
    }
  const double n = static_cast<double>(count);
  const T value = count ? static_cast<T>(acc / n) : T(0);
  return make_op<T>("masked_mean", {}, {value}, {x}, [mask, n](Node<T>& self) {
    if (n == 0) return;
    const T g = static_cast<T>(self.grad[0] / n);
    auto& pg = self.parents[0]->grad;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) pg[i] += g;
  });
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return unary<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return unary<T>(
      "sqrt", x, [](T v) { return std::sqrt(v); }, [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <class T>
Tensor<T> acos(const Tensor<T>& x) {
  for (T v : x.value())
    if (!(v > T(-1) && v < T(1))) throw ContractViolation("acos: argument outside (-1, 1); clamp first");
  return unary<T>(
      "acos", x, [](T v) { return std::acos(v); }, [](T v, T) { return T(-1) / std::sqrt(T(1) - v * v); });
}

template <class T>
Tensor<T> clamp(const Tensor<T>& x, double lo, double hi) {
  const T l = static_cast<T>(lo), h = static_cast<T>(hi);
  return unary<T>(
      "clamp", x, [l, h](T v) { return std::clamp(v, l, h); },
      [l, h](T v, T) { return (v >= l && v <= h) ? T(1) : T(0); });
}

template <class T>
Tensor<T> grayscale(const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.c != 3) throw ContractViolation("grayscale: expected 3 channels, got " + s.str());
  const Shape o{s.n, 1, s.h, s.w};
  std::vector<T> out(o.size());
  const std::size_t m = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < m; ++i) {
      const T* src = x.value().data() + static_cast<std::size_t>(n) * 3 * m + i;
      out[static_cast<std::size_t>(n) * m + i] =
          static_cast<T>(kw[0] * src[0]) + static_cast<T>(kw[1] * src[m]) + static_cast<T>(kw[2] * src[2 * m]);
    }
  return make_op<T>("grayscale", o, std::move(out), {x}, [s, m](Node<T>& self) {
    auto& g = self.parents[0]->grad;
    for (int n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < m; ++i) {
        const T d = self.grad[static_cast<std::size_t>(n) * m + i];
        for (int c = 0; c < 3; ++c) g[(static_cast<std::size_t>(n) * 3 + c) * m + i] += static_cast<T>(kw[c] * d);
      }
  });
}

template <class T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape o{s.n, s.c, s.h / 2, s.w / 2};
  if (o.h < 1 || o.w < 1) throw ContractViolation("avg_pool2: input too small " + s.str());
  std::vector<T> out(o.size());
  const auto& xv = x.value();
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p)
    for (int y = 0; y < o.h; ++y)
      for (int xx = 0; xx < o.w; ++xx) {
        const T* a = xv.data() + (p * s.h + 2 * y) * s.w + 2 * xx;
        out[(p * o.h + y) * o.w + xx] = (a[0] + a[1] + a[s.w] + a[s.w + 1]) * T(0.25);
      }
  return make_op<T>("avg_pool2", o, std::move(out), {x}, [s, o](Node<T>& self) {
    auto& g = self.parents[0]->grad;
    for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p)
      for (int y = 0; y < o.h; ++y)
        for (int xx = 0; xx < o.w; ++xx) {
          const T d = self.grad[(p * o.h + y) * o.w + xx] * T(0.25);
          T* a = g.data() + (p * s.h + 2 * y) * s.w + 2 * xx;
          a[0] += d;
          a[1] += d;
          a[s.w] += d;
          a[s.w + 1] += d;
        }
  });
}

template <class T>
Tensor<T> dot_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "dot_channels");
  const Shape s = a.shape();
  const Shape o{s.n, 1, s.h, s.w};
  const std::size_t m = s.plane();
  std::vector<T> out(o.size(), T(0));
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t k = (static_cast<std::size_t>(n) * s.c + c) * m + i;
        out[static_cast<std::size_t>(n) * m + i] += a.value()[k] * b.value()[k];
      }
  return make_op<T>("dot_channels", o, std::move(out), {a, b}, [s, m](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t k = (static_cast<std::size_t>(n) * s.c + c) * m + i;
          const T g = self.grad[static_cast<std::size_t>(n) * m + i];
          if (pa.requires_grad) pa.grad[k] += g * pb.value[k];
          if (pb.requires_grad) pb.grad[k] += g * pa.value[k];
        }
  });
}

template <class T>
Tensor<T> norm_channels(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape o{s.n, 1, s.h, s.w};
  const std::size_t m = s.plane();
  std::vector<T> out(o.size(), T(0));
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < m; ++i) {
        const T v = x.value()[(static_cast<std::size_t>(n) * s.c + c) * m + i];
        out[static_cast<std::size_t>(n) * m + i] += v * v;
      }
  for (auto& v : out) v = std::sqrt(v);
  return make_op<T>("norm_channels", o, std::move(out), {x}, [s, m](Node<T>& self) {
    auto& p = *self.parents[0];
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t q = static_cast<std::size_t>(n) * m + i;
          const std::size_t k = (static_cast<std::size_t>(n) * s.c + c) * m + i;
          if (self.value[q] > T(0)) p.grad[k] += self.grad[q] * p.value[k] / self.value[q];
        }
  });
}

template <class T>
Tensor<T> angle_channels(const Tensor<T>& a, const Tensor<T>& b, double delta) {
  require_same(a.shape(), b.shape(), "angle_channels");
  const Shape s = a.shape();
  const Shape o{s.n, 1, s.h, s.w};
  const std::size_t m = s.plane();
  const std::size_t np = o.size();
  // Per pixel: dot, |a|^2, |b|^2, clamped cosine, dtheta/dcos.
  std::vector<double> dot(np, 0.0), aa(np, 0.0), bb(np, 0.0), cosv(np, 1.0), dcos(np, 0.0);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t q = static_cast<std::size_t>(n) * m + i;
        const std::size_t k = (static_cast<std::size_t>(n) * s.c + c) * m + i;
        const double x = a.value()[k], y = b.value()[k];
        dot[q] += x * y;
        aa[q] += x * x;
        bb[q] += y * y;
      }
  std::vector<T> out(np, T(0));
  for (std::size_t q = 0; q < np; ++q) {
    if (aa[q] <= 0.0 || bb[q] <= 0.0) continue;
    const double raw = dot[q] / std::sqrt(aa[q] * bb[q]);
    const double lo = -1.0 + delta, hi = 1.0 - delta;
    const double c = std::clamp(raw, lo, hi);
    cosv[q] = c;
    out[q] = static_cast<T>(std::acos(c));
    if (raw > lo && raw < hi) dcos[q] = -1.0 / std::sqrt(1.0 - c * c);
  }
  struct Saved {
    std::vector<double> aa, bb, cosv, dcos;
  };
  auto saved = std::make_shared<Saved>(Saved{std::move(aa), std::move(bb), std::move(cosv), std::move(dcos)});
  return make_op<T>("angle_channels", o, std::move(out), {a, b}, [s, m, saved](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (int n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t q = static_cast<std::size_t>(n) * m + i;
        const double g = static_cast<double>(self.grad[q]) * saved->dcos[q];
        if (g == 0.0) continue;
        const double na = std::sqrt(saved->aa[q]), nb = std::sqrt(saved->bb[q]);
        const double c = saved->cosv[q];
        for (int ch = 0; ch < s.c; ++ch) {
          const std::size_t k = (static_cast<std::size_t>(n) * s.c + ch) * m + i;
          const double x = pa.value[k], y = pb.value[k];
          if (pa.requires_grad) pa.grad[k] += static_cast<T>(g * (y / (na * nb) - c * x / saved->aa[q]));
          if (pb.requires_grad) pb.grad[k] += static_cast<T>(g * (x / (na * nb) - c * y / saved->bb[q]));
        }
      }
  });
}

template <class T>
Tensor<T> gaussian_blur_valid(const Tensor<T>& x, int size, double sigma) {
  const Shape s = x.shape();
  if (size < 1 || size > s.h || size > s.w)
    throw ConfigError("gaussian_blur_valid: window " + std::to_string(size) + " larger than " + s.str());
  auto g = std::make_shared<std::vector<T>>(static_cast<std::size_t>(size));
  {
    double total = 0;
    std::vector<double> d(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
      const double r = i - (size - 1) / 2.0;
      d[static_cast<std::size_t>(i)] = std::exp(-r * r / (2 * sigma * sigma));
      total += d[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < size; ++i) (*g)[static_cast<std::size_t>(i)] = static_cast<T>(d[static_cast<std::size_t>(i)] / total);
  }
  const Shape o{s.n, s.c, s.h - size + 1, s.w - size + 1};
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  std::vector<T> out(o.size());
  std::vector<T> tmp(static_cast<std::size_t>(s.h) * o.w);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.value().data() + p * s.plane();
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < o.w; ++xx) {
        T acc = 0;
        for (int k = 0; k < size; ++k) acc += (*g)[static_cast<std::size_t>(k)] * src[static_cast<std::size_t>(y) * s.w + xx + k];
        tmp[static_cast<std::size_t>(y) * o.w + xx] = acc;
      }
    T* dst = out.data() + p * o.plane();
    for (int y = 0; y < o.h; ++y)
      for (int xx = 0; xx < o.w; ++xx) {
        T acc = 0;
        for (int k = 0; k < size; ++k) acc += (*g)[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * o.w + xx];
        dst[static_cast<std::size_t>(y) * o.w + xx] = acc;
      }
  }
  return make_op<T>("gaussian_blur_valid", o, std::move(out), {x}, [s, o, g, size, planes](Node<T>& self) {
    std::vector<T> tmp(static_cast<std::size_t>(s.h) * o.w);
    auto& pg = self.parents[0]->grad;
    for (std::size_t p = 0; p < planes; ++p) {
      std::fill(tmp.begin(), tmp.end(), T(0));
      const T* dy = self.grad.data() + p * o.plane();
      for (int y = 0; y < o.h; ++y)
        for (int xx = 0; xx < o.w; ++xx) {
          const T d = dy[static_cast<std::size_t>(y) * o.w + xx];
          for (int k = 0; k < size; ++k) tmp[static_cast<std::size_t>(y + k) * o.w + xx] += (*g)[static_cast<std::size_t>(k)] * d;
        }
      T* dx = pg.data() + p * s.plane();
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < o.w; ++xx) {
          const T d = tmp[static_cast<std::size_t>(y) * o.w + xx];
          for (int k = 0; k < size; ++k) dx[static_cast<std::size_t>(y) * s.w + xx + k] += (*g)[static_cast<std::size_t>(k)] * d;
        }
    }
  });
}

template <class T>
Tensor<T> sparse_gather(const Tensor<T>& src, const GatherPlan& plan) {
  const std::size_t pixels = static_cast<std::size_t>(plan.height) * plan.width;
  if (plan.pixel_begin.size() != pixels + 1) throw ContractViolation("sparse_gather: malformed plan");
  const auto nc = static_cast<std::size_t>(plan.channels);
  for (std::size_t off : plan.offset)
    if (off + nc > src.size()) throw ContractViolation("sparse_gather: offset outside the source tensor");
  const Shape o{1, plan.channels, plan.height, plan.width};
  std::vector<T> out(o.size(), T(0));
  const auto& sv = src.value();
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t c = 0; c < nc; ++c) {
      double acc = 0;
      for (std::uint32_t k = plan.pixel_begin[p]; k < plan.pixel_begin[p + 1]; ++k)
        acc += plan.weight[k] * static_cast<double>(sv[plan.offset[k] + c]);
      out[c * pixels + p] = static_cast<T>(acc);
    }
  auto shared = std::make_shared<GatherPlan>(plan);
  return make_op<T>("sparse_gather", o, std::move(out), {src}, [shared, pixels, nc](Node<T>& self) {
    auto& g = self.parents[0]->grad;
    const auto& pl = *shared;
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::uint32_t k = pl.pixel_begin[p]; k < pl.pixel_begin[p + 1]; ++k)
        for (std::size_t c = 0; c < nc; ++c) g[pl.offset[k] + c] += static_cast<T>(pl.weight[k] * self.grad[c * pixels + p]);
  });
}

#define NEURTEX_INSTANTIATE(T)                                                                           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);            \
  template Tensor<T> upsample2(const Tensor<T>&);                                                        \
  template Tensor<T> instance_norm(const Tensor<T>&, double);                                            \
  template Tensor<T> relu(const Tensor<T>&);                                                             \
  template Tensor<T> leaky_relu(const Tensor<T>&, double);                                               \
  template Tensor<T> tanh(const Tensor<T>&);                                                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> add_scalar(const Tensor<T>&, double);                                               \
  template Tensor<T> mul_scalar(const Tensor<T>&, double);                                               \
  template Tensor<T> pow_scalar(const Tensor<T>&, double);                                               \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                                     \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                                         \
  template Tensor<T> sum(const Tensor<T>&);                                                              \
  template Tensor<T> mean(const Tensor<T>&);                                                             \
  template Tensor<T> masked_mean(const Tensor<T>&, const std::vector<std::uint8_t>&);                    \
  template Tensor<T> abs(const Tensor<T>&);                                                              \
  template Tensor<T> square(const Tensor<T>&);                                                           \
  template Tensor<T> sqrt(const Tensor<T>&);                                                             \
  template Tensor<T> acos(const Tensor<T>&);                                                             \
  template Tensor<T> clamp(const Tensor<T>&, double, double);                                            \
  template Tensor<T> grayscale(const Tensor<T>&);                                                        \
  template Tensor<T> avg_pool2(const Tensor<T>&);                                                        \
  template Tensor<T> dot_channels(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> norm_channels(const Tensor<T>&);                                                    \
  template Tensor<T> angle_channels(const Tensor<T>&, const Tensor<T>&, double);                         \
  template Tensor<T> gaussian_blur_valid(const Tensor<T>&, int, double);                                 \
  template Tensor<T> sparse_gather(const Tensor<T>&, const GatherPlan&);

NEURTEX_INSTANTIATE(float)
NEURTEX_INSTANTIATE(double)

}  // namespace neurtex::ad
