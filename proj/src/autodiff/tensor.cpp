// SPDX-License-Identifier: Apache-2.0
#include "neurtex/autodiff/tensor.hpp"

#include <unordered_set>

#include "neurtex/autodiff/ops.hpp"

namespace neurtex::ad {

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) +
         ")";
}

template <class T>
Tensor<T> Tensor<T>::leaf(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != shape.size())
    throw ContractViolation("Tensor::leaf: " + std::to_string(values.size()) + " values for shape " + shape.str());
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Tensor(std::move(node));
}

template <class T>
T Tensor<T>::item() const {
  if (size() != 1) throw ContractViolation("Tensor::item on shape " + shape().str());
  return value()[0];
}

template <class T>
Tensor<T> make_op(std::string op, Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(value);
  node->op = std::move(op);
  bool needs = false;
  if (grad_enabled())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) throw ContractViolation("backward: loss must be scalar, got " + loss.shape().str());
  if (!loss.requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward) continue;
    n->ensure_grad();
    for (auto& p : n->parents)
      if (p->requires_grad) p->ensure_grad();
    n->backward(*n);
  }
}

template <class T>
void check_finite(const Tensor<T>& t, const std::string& what) {
  for (T v : t.value())
    if (!std::isfinite(v)) throw NumericalError(what + ": non-finite value in " + t.node()->op + " output");
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op(std::string, Shape, std::vector<float>, std::vector<Tensor<float>>,
                               std::function<void(Node<float>&)>);
template Tensor<double> make_op(std::string, Shape, std::vector<double>, std::vector<Tensor<double>>,
                                std::function<void(Node<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template void check_finite(const Tensor<float>&, const std::string&);
template void check_finite(const Tensor<double>&, const std::string&);

}  // namespace neurtex::ad
