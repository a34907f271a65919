// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "neurtex/errors.hpp"

namespace neurtex::ad {

/// NCHW shape; unused leading axes are 1. A scalar is {1, 1, 1, 1}.
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads this->grad, accumulates into parents
  std::string op;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

/// Handle to a graph node. Copies share the node.
template <class T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  /// Leaf with given values; parameters pass requires_grad = true.
  static Tensor leaf(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return leaf(shape, std::vector<T>(shape.size(), T(0)), requires_grad);
  }
  static Tensor scalar(T v) { return leaf({}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  T item() const;
  const NodePtr& node() const { return node_; }

  /// Same values, cut from the graph.
  Tensor detach() const { return leaf(shape(), value(), false); }

 private:
  NodePtr node_;
};

/// Creates an op node. The node requires grad iff any parent does; when none
/// does the backward closure is dropped and parents are not retained.
template <class T>
Tensor<T> make_op(std::string op, Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backward);

/// Reverse pass from a scalar. Gradients accumulate into every reachable node
/// that requires grad; leaves keep theirs until cleared.
template <class T>
void backward(const Tensor<T>& loss);

/// Throws NumericalError naming the op if any value is not finite.
template <class T>
void check_finite(const Tensor<T>& t, const std::string& what);

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace neurtex::ad
