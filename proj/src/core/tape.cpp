#include "lvr/tape.hpp"

#include <stdexcept>

namespace lvr {

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  if (consumed_) throw std::logic_error("tape already used for backward; create a new tape per pass");
  nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
  if (consumed_) throw std::logic_error("tape already used for backward; create a new tape per pass");
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape != this) throw std::invalid_argument("op input belongs to a different tape");
    needs = needs || nodes_.at(in.id).requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Tensor<T> Tape<T>::gradient(Var<T> v) const {
  const auto& node = nodes_.at(v.id);
  if (node.grad.empty()) return Tensor<T>::zeros(node.value.shape());
  return node.grad;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  auto& node = nodes_.at(id);
  if (node.grad.empty()) node.grad = Tensor<T>::zeros(node.value.shape());
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
  if (root.tape != this) throw std::invalid_argument("backward root belongs to a different tape");
  if (consumed_) throw std::logic_error("backward already ran on this tape");
  if (value(root.id).size() != 1) {
    throw std::invalid_argument("backward root must be a scalar, got shape " + shape_str(value(root.id).shape()));
  }
  consumed_ = true;
  grad_buffer(root.id).fill(T(1));
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
    node.backward(*this, i);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace lvr
