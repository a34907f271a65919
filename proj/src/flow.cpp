// SPDX-License-Identifier: Apache-2.0
#include "neurtex/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "neurtex/warp.hpp"

namespace neurtex {

FlowField ground_truth_flow(const CameraView& view_t, const RayBuffer& buf_t, const CameraView& view_t1,
                            const RayBuffer& buf_t1, double eps) {
  const WarpMap m = build_warp(view_t1, buf_t1, view_t, buf_t, eps);
  FlowField f(buf_t.height, buf_t.width);
  for (int y = 0; y < buf_t.height; ++y)
    for (int x = 0; x < buf_t.width; ++x) {
      const auto i = buf_t.index(y, x);
      if (!m.valid[i]) continue;
      f.flow.at(y, x, 0) = m.x[i] - static_cast<float>(x);
      f.flow.at(y, x, 1) = m.y[i] - static_cast<float>(y);
      f.valid[i] = 1;
    }
  return f;
}

FlowField ground_truth_flow(const Scene& scene, const CameraView& view_t, const CameraView& view_t1, double eps) {
  return ground_truth_flow(view_t, ray_cast(scene, view_t), view_t1, ray_cast(scene, view_t1), eps);
}

Image flow_to_color(const FlowField& f, double max_magnitude) {
  Image img(f.height(), f.width(), 3);
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      if (!f.valid[static_cast<std::size_t>(y) * f.width() + x]) continue;
      const double dx = f.flow.at(y, x, 0), dy = f.flow.at(y, x, 1);
      const double hue = (std::atan2(dy, dx) + std::numbers::pi) / (2 * std::numbers::pi) * 6.0;
      const double sat = std::clamp(std::hypot(dx, dy) / max_magnitude, 0.0, 1.0);
      const double c = sat, xh = c * (1 - std::abs(std::fmod(hue, 2.0) - 1));
      double r = 0, g = 0, b = 0;
      switch (static_cast<int>(hue) % 6) {
        case 0: r = c; g = xh; break;
        case 1: r = xh; g = c; break;
        case 2: g = c; b = xh; break;
        case 3: g = xh; b = c; break;
        case 4: r = xh; b = c; break;
        default: r = c; b = xh; break;
      }
      const double m = 1.0 - c;
      img.at(y, x, 0) = static_cast<float>(r + m);
      img.at(y, x, 1) = static_cast<float>(g + m);
      img.at(y, x, 2) = static_cast<float>(b + m);
    }
  return img;
}

}  // namespace neurtex
