#pragma once

#include <cstdint>
#include <vector>

#include "lvr/model.hpp"
#include "lvr/tensor.hpp"

namespace lvr {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments mirror the parameter list, shape for shape.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const std::vector<Parameter<T>>& params);
  bool operator==(const AdamState&) const = default;
};

// One bias-corrected Adam update. Throws std::runtime_error naming the
// parameter when a gradient is not finite; nothing is modified in that case.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const AdamOptions& opts);

// Scales `grads` in place so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm);

}  // namespace lvr
