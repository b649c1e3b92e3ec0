#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "lvr/tape.hpp"

// Differentiable operations. Every op records its result on the tape of its
// inputs; shape errors throw std::invalid_argument naming the bad dimension.
namespace lvr::ops {

template <typename T>
struct ComplexVar {
  Var<T> real;
  Var<T> imag;
};

// Elementwise, equal shapes.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);

template <typename T> Var<T> scale(Var<T> a, T s);
template <typename T> Var<T> add_scalar(Var<T> a, T s);
template <typename T> Var<T> square(Var<T> a);
template <typename T> Var<T> sqrt(Var<T> a);
// Subgradient 0 at the origin.
template <typename T> Var<T> abs(Var<T> a);
template <typename T> Var<T> sigmoid(Var<T> a);
template <typename T> Var<T> relu(Var<T> a);
template <typename T> Var<T> tanh(Var<T> a);

// Reductions to a one-element tensor of shape [1].
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);

template <typename T> Var<T> reshape(Var<T> a, Shape shape);

// NCHW channel plumbing.
template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& xs);
template <typename T> std::pair<Var<T>, Var<T>> split_channels_in_two(Var<T> x);
template <typename T> Var<T> global_avg_pool(Var<T> x);
// x: N x C x H x W; s: N x C x 1 x 1 or 1 x C x 1 x 1, broadcast over space.
template <typename T> Var<T> channel_scale(Var<T> x, Var<T> s);
template <typename T> Var<T> pad_replicate(Var<T> x, std::size_t pad);

// Rank 2 (M x K by K x N) or batched rank 3.
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// Swaps the last two axes.
template <typename T> Var<T> transpose(Var<T> a);
// Softmax along the last axis.
template <typename T> Var<T> softmax_rows(Var<T> a);

// input N x C x H x W, weight O x (C/groups) x k x k, bias O.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, std::optional<Var<T>> bias, std::size_t stride = 1,
              std::size_t padding = 0, std::size_t groups = 1);

// Normalizes across channels at every (n, h, w) position.
inline constexpr double kLayerNormEps = 1e-6;
template <typename T>
Var<T> layer_norm(Var<T> input, Var<T> gain, Var<T> offset, T eps = T(kLayerNormEps));

// Unnormalized 2-D DFT over H and W.
template <typename T> ComplexVar<T> fft2(Var<T> x);
// Magnitudes and phases below this magnitude get a zero gradient.
inline constexpr double kSpectralFloor = 1e-8;
template <typename T> Var<T> amplitude(const ComplexVar<T>& z);
template <typename T> Var<T> phase(const ComplexVar<T>& z);

}  // namespace lvr::ops
