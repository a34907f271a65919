// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "neurtex/errors.hpp"

namespace neurtex {

/// H x W x C float image, channel-interleaved (HWC). The unit of rendering,
/// projection and metric traffic; network code converts to CHW tensors.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, float fill = 0.0f)
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<std::size_t>(height) * width * channels, fill) {
    if (height < 0 || width < 0 || channels < 0)
      throw ContractViolation("Image: negative dimension");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }
  std::span<float> pixel(int y, int x) { return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)}; }
  std::span<const float> pixel(int y, int x) const {
    return {data_.data() + index(y, x, 0), static_cast<std::size_t>(channels_)};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }

  bool same_shape(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0, width_ = 0, channels_ = 0;
  std::vector<float> data_;
};

/// Luma with fixed 0.299/0.587/0.114 weights; single-channel output.
Image to_grayscale(const Image& rgb);

}  // namespace neurtex
