// SPDX-License-Identifier: Apache-2.0
#include "neurtex/autodiff/adam.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include "neurtex/binary_io.hpp"

namespace neurtex::ad {

template <class T>
Tensor<T> ParamStore<T>::add(const std::string& name, Shape shape, std::vector<T> values) {
  if (entries_.count(name)) throw ContractViolation("ParamStore: duplicate parameter " + name);
  Entry e;
  e.param = Tensor<T>::leaf(shape, std::move(values), true);
  e.m.assign(shape.size(), T(0));
  e.v.assign(shape.size(), T(0));
  auto t = e.param;
  entries_.emplace(name, std::move(e));
  return t;
}

template <class T>
Tensor<T> ParamStore<T>::add_conv_weight(const std::string& name, int cout, int cin, int k, Rng& rng) {
  const Shape s{cout, cin, k, k};
  const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * k * k)) * 0.5;
  std::vector<T> v(s.size());
  for (auto& x : v) x = static_cast<T>(uniform(rng, -bound, bound));
  return add(name, s, std::move(v));
}

template <class T>
Tensor<T> ParamStore<T>::add_zeros(const std::string& name, Shape shape) {
  return add(name, shape, std::vector<T>(shape.size(), T(0)));
}

template <class T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractViolation("ParamStore: unknown parameter " + name);
  return it->second.param;
}

template <class T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.param.size();
  return n;
}

template <class T>
void ParamStore<T>::adam_step(double lr, const AdamConfig& cfg) {
  for (auto& [_, e] : entries_) {
    auto& p = e.param;
    ++e.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.step));
    auto& val = p.value();
    const auto& grad = p.grad();
    const bool has = grad.size() == val.size();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double g = has ? static_cast<double>(grad[i]) : 0.0;
      const double m = cfg.beta1 * e.m[i] + (1 - cfg.beta1) * g;
      const double v = cfg.beta2 * e.v[i] + (1 - cfg.beta2) * g * g;
      e.m[i] = static_cast<T>(m);
      e.v[i] = static_cast<T>(v);
      const double mhat = m / c1, vhat = v / c2;
      val[i] = static_cast<T>(val[i] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
  zero_grad();
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& [_, e] : entries_) e.param.grad().clear();
}

template class ParamStore<float>;
template class ParamStore<double>;

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  auto os = open_out(path);
  write_magic(os, "NTCKPT1");
  write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.values.size() != t.shape.size()) throw ContractViolation("checkpoint: size mismatch for " + t.name);
    write_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_u32(os, 4);
    for (int d : {t.shape.n, t.shape.c, t.shape.h, t.shape.w}) write_u32(os, static_cast<std::uint32_t>(d));
  }
  for (const auto& t : tensors) write_f32(os, t.values);
  if (!os) throw IoError(path.string() + ": write failed");
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "NTCKPT1", path);
  const auto count = read_u32(is, path);
  if (count > 1'000'000) throw IoError(path.string() + ": implausible entry count");
  std::vector<NamedTensor> out(count);
  for (auto& t : out) {
    const auto len = read_u32(is, path);
    if (len > 4096) throw IoError(path.string() + ": implausible name length");
    t.name.resize(len);
    is.read(t.name.data(), len);
    if (read_u32(is, path) != 4) throw IoError(path.string() + ": unsupported tensor rank");
    t.shape.n = static_cast<int>(read_u32(is, path));
    t.shape.c = static_cast<int>(read_u32(is, path));
    t.shape.h = static_cast<int>(read_u32(is, path));
    t.shape.w = static_cast<int>(read_u32(is, path));
    if (t.shape.size() > (std::size_t{1} << 31)) throw IoError(path.string() + ": implausible tensor shape");
  }
  for (auto& t : out) {
    t.values.resize(t.shape.size());
    read_f32(is, t.values, path);
  }
  return out;
}

void append_store(std::vector<NamedTensor>& out, const ParamStore<float>& store, const std::string& prefix) {
  for (const auto& [name, e] : store.entries()) {
    const Shape s = e.param.shape();
    out.push_back({prefix + name, s, e.param.value()});
    out.push_back({prefix + name + "#m", s, e.m});
    out.push_back({prefix + name + "#v", s, e.v});
    // Step counts stay exact in float32 up to 2^24.
    out.push_back({prefix + name + "#step", {}, {static_cast<float>(e.step)}});
  }
}

void restore_store(const std::vector<NamedTensor>& in, ParamStore<float>& store, const std::string& prefix) {
  std::unordered_map<std::string, const NamedTensor*> index;
  for (const auto& t : in) index[t.name] = &t;
  auto find = [&](const std::string& name, const Shape& shape) -> const NamedTensor& {
    auto it = index.find(name);
    if (it == index.end()) throw IoError("checkpoint: missing tensor " + name);
    if (!(it->second->shape == shape))
      throw IoError("checkpoint: tensor " + name + " has shape " + it->second->shape.str() + ", expected " + shape.str());
    return *it->second;
  };
  for (auto& [name, e] : store.entries()) {
    const Shape s = e.param.shape();
    e.param.value() = find(prefix + name, s).values;
    e.m = find(prefix + name + "#m", s).values;
    e.v = find(prefix + name + "#v", s).values;
    e.step = static_cast<long long>(find(prefix + name + "#step", {}).values[0]);
    e.param.grad().clear();
  }
}

}  // namespace neurtex::ad
