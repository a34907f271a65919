// SPDX-License-Identifier: Apache-2.0
// Central finite-difference check of reverse-mode gradients (double precision).
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "neurtex/autodiff/ops.hpp"
#include "neurtex/rng.hpp"

namespace oracle {

struct GradCheckResult {
  bool ok = true;
  double worst_abs = 0, worst_rel = 0;
  std::size_t checked = 0;
  std::string detail;
};

using neurtex::ad::Tensord;

/// Builds `inputs` as grad-requiring leaves, evaluates f, backpropagates, and
/// compares every input coordinate (or up to max_coords per input) against
/// (f(x + h) - f(x - h)) / 2h. Passes when |a - n| <= max(abs_tol, rel_tol * max(|a|, |n|)).
inline GradCheckResult gradcheck(const std::function<Tensord(const std::vector<Tensord>&)>& f,
                                 const std::vector<std::pair<neurtex::ad::Shape, std::vector<double>>>& inputs,
                                 double h = 1e-3, double rel_tol = 1e-3, double abs_tol = 1e-5,
                                 std::size_t max_coords = 400) {
  GradCheckResult r;
  std::vector<Tensord> leaves;
  for (const auto& [shape, vals] : inputs) leaves.push_back(Tensord::leaf(shape, vals, true));
  const Tensord loss = f(leaves);
  neurtex::ad::backward(loss);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto& base = inputs[k].second;
    const std::size_t n = base.size();
    const std::size_t stride = std::max<std::size_t>(1, n / max_coords);
    for (std::size_t i = 0; i < n; i += stride) {
      auto eval = [&](double delta) {
        std::vector<Tensord> probe;
        for (std::size_t q = 0; q < inputs.size(); ++q) {
          auto v = inputs[q].second;
          if (q == k) v[i] += delta;
          probe.push_back(Tensord::leaf(inputs[q].first, v, false));
        }
        return f(probe).item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double analytic = leaves[k].grad().empty() ? 0.0 : leaves[k].grad()[i];
      const double diff = std::abs(numeric - analytic);
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      r.worst_abs = std::max(r.worst_abs, diff);
      if (scale > 0) r.worst_rel = std::max(r.worst_rel, diff / scale);
      ++r.checked;
      if (diff > std::max(abs_tol, rel_tol * scale)) {
        if (r.ok)
          r.detail = "input " + std::to_string(k) + " coord " + std::to_string(i) + ": analytic " +
                     std::to_string(analytic) + " numeric " + std::to_string(numeric);
        r.ok = false;
      }
    }
  }
  return r;
}

/// Values uniform in [lo, hi] with |v| >= gap (keeps probes off kinks at 0).
inline std::vector<double> random_values(std::size_t n, neurtex::Rng& rng, double lo = -1, double hi = 1,
                                         double gap = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) {
    do x = neurtex::uniform(rng, lo, hi);
    while (std::abs(x) < gap);
  }
  return v;
}

/// Reduces an arbitrary tensor to a scalar with fixed random weights so every
/// output element contributes a distinct amount.
inline Tensord weighted_sum(const Tensord& t, std::uint64_t seed) {
  neurtex::Rng rng(seed);
  auto w = Tensord::leaf(t.shape(), random_values(t.size(), rng, 0.5, 1.5));
  return neurtex::ad::sum(neurtex::ad::mul(t, w));
}

}  // namespace oracle
