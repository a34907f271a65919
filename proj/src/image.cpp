// SPDX-License-Identifier: Apache-2.0
#include "neurtex/image.hpp"

namespace neurtex {

Image to_grayscale(const Image& rgb) {
  if (rgb.channels() < 3) throw ContractViolation("to_grayscale: need >= 3 channels");
  Image g(rgb.height(), rgb.width(), 1);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      g.at(y, x) = 0.299f * rgb.at(y, x, 0) + 0.587f * rgb.at(y, x, 1) + 0.114f * rgb.at(y, x, 2);
  return g;
}

}  // namespace neurtex
