#include "lvr/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace lvr {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const std::vector<Parameter<T>>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Tensor<T>::zeros(p.value.shape()));
    s.v.push_back(Tensor<T>::zeros(p.value.shape()));
  }
  return s;
}

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const AdamOptions& opts) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape() || state.m[i].shape() != params[i].value.shape()) {
      throw std::invalid_argument("adam_step: shape mismatch for " + params[i].name);
    }
    for (T g : grads[i].data()) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam_step: non-finite gradient in " + params[i].name + " at step " +
                                 std::to_string(state.t + 1));
      }
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(opts.beta1, t);
  const double c2 = 1.0 - std::pow(opts.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = opts.beta1 * m[j] + (1.0 - opts.beta1) * gj;
      const double vj = opts.beta2 * v[j] + (1.0 - opts.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = opts.lr * (mj / c1) / (std::sqrt(vj / c2) + opts.eps);
      p[j] = static_cast<T>(p[j] - update);
    }
  }
}

template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads)
    for (T x : g.data()) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (T& x : g.data()) x = static_cast<T>(x * s);
  }
  return norm;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::vector<Parameter<float>>&, const std::vector<Tensor<float>>&, AdamState<float>&,
                               const AdamOptions&);
template void adam_step<double>(std::vector<Parameter<double>>&, const std::vector<Tensor<double>>&,
                                AdamState<double>&, const AdamOptions&);
template double clip_global_norm<float>(std::vector<Tensor<float>>&, double);
template double clip_global_norm<double>(std::vector<Tensor<double>>&, double);

}  // namespace lvr
