// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "neurtex/autodiff/tensor.hpp"
#include "neurtex/rng.hpp"

namespace neurtex::ad {

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// Named parameters with per-parameter Adam state.
template <class T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> param;
    std::vector<T> m, v;
    long long step = 0;
  };

  /// Registers a trainable leaf; names are unique.
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values);
  /// Kaiming-uniform style init for a conv weight (C_out, C_in, k, k).
  Tensor<T> add_conv_weight(const std::string& name, int cout, int cin, int k, Rng& rng);
  Tensor<T> add_zeros(const std::string& name, Shape shape);

  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::size_t parameter_count() const;

  /// Adam with bias correction, then clears gradients. Parameters without a
  /// gradient buffer are treated as having zero gradient.
  void adam_step(double lr, const AdamConfig& cfg = {});
  void zero_grad();

 private:
  std::map<std::string, Entry> entries_;
};

/// Checkpoint container: tag "NTCKPT1", u32 entry count, then per entry
/// u32 name length, name bytes, u32 rank (4), u32 N, C, H, W; after the
/// manifest, float32 values of all entries in manifest order.
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Parameters and Adam state of a store as named tensors ("<prefix><name>",
/// "<prefix><name>#m", "#v", "#step").
void append_store(std::vector<NamedTensor>& out, const ParamStore<float>& store, const std::string& prefix);
/// Restores every parameter of `store` from `in`; throws IoError when a
/// tensor is missing or has a different shape.
void restore_store(const std::vector<NamedTensor>& in, ParamStore<float>& store, const std::string& prefix);

}  // namespace neurtex::ad
