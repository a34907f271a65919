// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "neurtex/autodiff/ops.hpp"
#include "neurtex/texture.hpp"

namespace neurtex {

/// Differentiable a_tex = project(tex, buf) as a (1, N, H, W) tensor. `values`
/// is the flat texture tensor (shape.size() elements) and `layout` supplies
/// shape and bounding boxes. The float instantiation runs the project /
/// project_adjoint kernels; other scalar types use an equivalent sparse gather.
template <class T>
ad::Tensor<T> project_texture(const ad::Tensor<T>& values, const NeuralTexture& layout, const RayBuffer& buf);

/// HWC image -> (1, C, H, W) tensor of scale * v + offset.
template <class T>
ad::Tensor<T> image_to_tensor(const Image& img, double scale = 1.0, double offset = 0.0);
/// (1, C, H, W) tensor -> HWC image of scale * v + offset.
template <class T>
Image tensor_to_image(const ad::Tensor<T>& t, double scale = 1.0, double offset = 0.0);

/// 12-texel gather plan of a ray buffer (used by the generic path and tests).
ad::GatherPlan texture_gather_plan(const NeuralTexture& layout, const RayBuffer& buf);

}  // namespace neurtex
