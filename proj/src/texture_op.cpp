// SPDX-License-Identifier: Apache-2.0
#include "neurtex/texture_op.hpp"

#include <algorithm>
#include <memory>

namespace neurtex {

ad::GatherPlan texture_gather_plan(const NeuralTexture& layout, const RayBuffer& buf) {
  ad::GatherPlan plan;
  plan.height = buf.height;
  plan.width = buf.width;
  plan.channels = layout.shape().features;
  plan.pixel_begin.push_back(0);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const int o = buf.object[i];
    if (o != kMiss) {
      if (o < 0 || o >= layout.shape().objects) throw ContractViolation("project_texture: object id out of range");
      for (const auto& tw : pixel_support(layout.shape(), layout.boxes()[static_cast<std::size_t>(o)], o,
                                          buf.point[i], buf.normal[i])) {
        plan.offset.push_back(tw.offset);
        plan.weight.push_back(tw.weight);
      }
    }
    plan.pixel_begin.push_back(static_cast<std::uint32_t>(plan.offset.size()));
  }
  return plan;
}

template <class T>
ad::Tensor<T> image_to_tensor(const Image& img, double scale, double offset) {
  const int c = img.channels();
  const std::size_t m = img.pixel_count();
  std::vector<T> v(img.size());
  for (std::size_t p = 0; p < m; ++p)
    for (int k = 0; k < c; ++k)
      v[static_cast<std::size_t>(k) * m + p] = static_cast<T>(scale * img.data()[p * c + k] + offset);
  return ad::Tensor<T>::leaf({1, c, img.height(), img.width()}, std::move(v));
}

template <class T>
Image tensor_to_image(const ad::Tensor<T>& t, double scale, double offset) {
  const ad::Shape s = t.shape();
  if (s.n != 1) throw ContractViolation("tensor_to_image: batch size must be 1, got " + s.str());
  Image img(s.h, s.w, s.c);
  const std::size_t m = s.plane();
  for (std::size_t p = 0; p < m; ++p)
    for (int k = 0; k < s.c; ++k)
      img.data()[p * s.c + k] = static_cast<float>(scale * t.value()[static_cast<std::size_t>(k) * m + p] + offset);
  return img;
}

template <class T>
ad::Tensor<T> project_texture(const ad::Tensor<T>& values, const NeuralTexture& layout, const RayBuffer& buf) {
  if (values.size() != layout.shape().size())
    throw ContractViolation("project_texture: texture tensor has " + std::to_string(values.size()) +
                            " values, layout expects " + std::to_string(layout.shape().size()));
  if constexpr (std::is_same_v<T, float>) {
    auto tex = std::make_shared<NeuralTexture>(layout.shape(), layout.boxes());
    std::copy(values.value().begin(), values.value().end(), tex->values().begin());
    const Image hwc = project(*tex, buf);
    const int nf = layout.shape().features;
    const std::size_t m = hwc.pixel_count();
    std::vector<float> chw(hwc.size());
    for (std::size_t p = 0; p < m; ++p)
      for (int c = 0; c < nf; ++c) chw[static_cast<std::size_t>(c) * m + p] = hwc.data()[p * nf + c];
    auto rb = std::make_shared<RayBuffer>(buf);
    return ad::make_op<float>("project_texture", {1, nf, buf.height, buf.width}, std::move(chw), {values},
                              [tex, rb, nf, m](ad::Node<float>& self) {
                                Image g(rb->height, rb->width, nf);
                                for (std::size_t p = 0; p < m; ++p)
                                  for (int c = 0; c < nf; ++c)
                                    g.data()[p * nf + c] = self.grad[static_cast<std::size_t>(c) * m + p];
                                const auto adj = project_adjoint(g, *rb, *tex, true);
                                auto& pg = self.parents[0]->grad;
                                for (std::size_t i = 0; i < adj.size(); ++i) pg[i] += adj[i];
                              });
  } else {
    return ad::sparse_gather(values, texture_gather_plan(layout, buf));
  }
}

template ad::Tensor<float> image_to_tensor(const Image&, double, double);
template ad::Tensor<double> image_to_tensor(const Image&, double, double);
template Image tensor_to_image(const ad::Tensor<float>&, double, double);
template Image tensor_to_image(const ad::Tensor<double>&, double, double);
template ad::Tensor<float> project_texture(const ad::Tensor<float>&, const NeuralTexture&, const RayBuffer&);
template ad::Tensor<double> project_texture(const ad::Tensor<double>&, const NeuralTexture&, const RayBuffer&);

}  // namespace neurtex
