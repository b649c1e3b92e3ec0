#pragma once

#include <cstddef>
#include <span>

namespace lvr::kernels {

struct Conv2dGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  std::size_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
};

// OpenMP kernels. Each output element is owned by exactly one thread and is
// reduced in a fixed order, so results do not depend on the thread count.
// `bias` may be empty. Backward kernels accumulate into their outputs.
template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

// Transposed convolution of the output gradient with the same weights.
template <typename T>
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const T> grad_output, std::span<const T> weight,
                           std::span<T> grad_input);

template <typename T>
void conv2d_backward_weight(const Conv2dGeometry& g, std::span<const T> grad_output, std::span<const T> input,
                            std::span<T> grad_weight, std::span<T> grad_bias);

// Straight-line single-threaded versions, kept as the reference the parallel
// kernels are tested and benchmarked against.
namespace serial {

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

template <typename T>
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const T> grad_output, std::span<const T> weight,
                           std::span<T> grad_input);

template <typename T>
void conv2d_backward_weight(const Conv2dGeometry& g, std::span<const T> grad_output, std::span<const T> input,
                            std::span<T> grad_weight, std::span<T> grad_bias);

}  // namespace serial

// Threads used by the parallel kernels; 0 restores the OpenMP default.
void set_num_threads(int n);
int num_threads();

}  // namespace lvr::kernels
