#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "lvr/tensor.hpp"

namespace lvr {

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

// Append-only reverse-mode graph. Single use: one forward, one backward.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Records an op result. `fn` is dropped when no input needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  // Gradient accumulated into a node; zeros when backward never reached it.
  Tensor<T> gradient(Var<T> v) const;
  // Upstream gradient of the node being differentiated. Valid inside a BackwardFn.
  const Tensor<T>& grad_of(std::size_t id) const { return nodes_.at(id).grad; }
  // Accumulator for an input node, allocated on first use.
  Tensor<T>& grad_buffer(std::size_t id);

  void backward(Var<T> root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  // deque keeps references stable while ops append.
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace lvr
