#pragma once

#include <complex>
#include <span>

#include "lvr/tensor.hpp"

namespace lvr {

template <typename T>
struct ComplexPlane {
  Tensor<T> real;
  Tensor<T> imag;

  const Shape& shape() const { return real.shape(); }
};

// In-place unnormalized 1-D DFT of any length. Power-of-two lengths use an
// iterative radix-2 transform; other lengths go through Bluestein's chirp-z.
// The inverse is unnormalized as well (no 1/n).
template <typename T>
void fft1d(std::span<std::complex<T>> data, bool inverse);

// Unnormalized 2-D DFT over the trailing two axes of a real NCHW tensor.
// Bins that are real by Hermitian symmetry get an exactly zero imaginary part.
template <typename T>
ComplexPlane<T> fft2(const Tensor<T>& input);

// 2-D DFT of a complex plane. The inverse is normalized by 1/(H*W), so
// ifft2(fft2(x)) reproduces x.
template <typename T>
ComplexPlane<T> fft2(const ComplexPlane<T>& input, bool inverse);

template <typename T>
ComplexPlane<T> ifft2(const ComplexPlane<T>& input) {
  return fft2(input, true);
}

}  // namespace lvr
