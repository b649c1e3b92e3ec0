#include "lvr/fft.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "lvr/kernels.hpp"

namespace lvr {

namespace {

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

// exp(-2*pi*i*num/den), exact at multiples of a quarter turn.
template <typename T>
std::complex<T> unit_root(std::size_t num, std::size_t den) {
  num %= den;
  if ((4 * num) % den == 0) {
    switch ((4 * num) / den) {
      case 0: return {T(1), T(0)};
      case 1: return {T(0), T(-1)};
      case 2: return {T(-1), T(0)};
      default: return {T(0), T(1)};
    }
  }
  const double a = -2.0 * std::numbers::pi * static_cast<double>(num) / static_cast<double>(den);
  return {static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a))};
}

template <typename T>
class Plan {
 public:
  explicit Plan(std::size_t n) : n_(n) {
    if (is_pow2(n)) {
      build_radix2(n);
    } else {
      build_bluestein(n);
    }
  }

  void forward(std::complex<T>* x) const {
    if (inner_) {
      bluestein(x);
    } else {
      radix2(x);
    }
  }

 private:
  void build_radix2(std::size_t n) {
    bitrev_.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) twiddle_[k] = unit_root<T>(k, n);
  }

  void build_bluestein(std::size_t n) {
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;
    m_ = m;
    chirp_.resize(n);
    // exp(-i*pi*k^2/n) == unit_root(k^2 mod 2n, 2n)
    for (std::size_t k = 0; k < n; ++k) chirp_[k] = unit_root<T>((k * k) % (2 * n), 2 * n);
    inner_ = std::make_unique<Plan<T>>(m);
    kernel_.assign(m, {});
    kernel_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
      kernel_[k] = std::conj(chirp_[k]);
      kernel_[m - k] = std::conj(chirp_[k]);
    }
    inner_->forward(kernel_.data());
  }

  void radix2(std::complex<T>* x) const {
    const std::size_t n = n_;
    for (std::size_t i = 0; i < n; ++i) {
      if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n / len;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const std::complex<T> w = twiddle_[j * step];
          const std::complex<T> u = x[start + j];
          const std::complex<T> v = x[start + j + half] * w;
          x[start + j] = u + v;
          x[start + j + half] = u - v;
        }
      }
    }
  }

  void bluestein(std::complex<T>* x) const {
    std::vector<std::complex<T>> a(m_);
    for (std::size_t k = 0; k < n_; ++k) a[k] = x[k] * chirp_[k];
    inner_->forward(a.data());
    for (std::size_t k = 0; k < m_; ++k) a[k] = std::conj(a[k] * kernel_[k]);
    // Inverse through the conjugation identity.
    inner_->forward(a.data());
    const T scale = T(1) / static_cast<T>(m_);
    for (std::size_t k = 0; k < n_; ++k) x[k] = std::conj(a[k]) * scale * chirp_[k];
  }

  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<T>> twiddle_;
  std::size_t m_ = 0;
  std::vector<std::complex<T>> chirp_;
  std::vector<std::complex<T>> kernel_;
  std::unique_ptr<Plan<T>> inner_;
};

template <typename T>
const Plan<T>& plan_for(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::unique_ptr<Plan<T>>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Plan<T>>(n);
  return *slot;
}

template <typename T>
void transform_plane(std::complex<T>* plane, std::size_t h, std::size_t w, bool inverse) {
  for (std::size_t r = 0; r < h; ++r) fft1d<T>(std::span(plane + r * w, w), inverse);
  std::vector<std::complex<T>> col(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) col[r] = plane[r * w + c];
    fft1d<T>(std::span(col), inverse);
    for (std::size_t r = 0; r < h; ++r) plane[r * w + c] = col[r];
  }
}

}  // namespace

template <typename T>
void fft1d(std::span<std::complex<T>> data, bool inverse) {
  const std::size_t n = data.size();
  if (n <= 1) return;
  const Plan<T>& plan = plan_for<T>(n);
  if (inverse) {
    for (auto& v : data) v = std::conj(v);
    plan.forward(data.data());
    for (auto& v : data) v = std::conj(v);
  } else {
    plan.forward(data.data());
  }
}

template <typename T>
ComplexPlane<T> fft2(const Tensor<T>& input) {
  if (input.rank() < 2) throw std::invalid_argument("fft2: input needs at least two axes, got " + shape_str(input.shape()));
  const std::size_t h = input.dim(input.rank() - 2);
  const std::size_t w = input.dim(input.rank() - 1);
  const std::size_t planes = input.size() / (h * w);
  ComplexPlane<T> out{Tensor<T>(input.shape()), Tensor<T>(input.shape())};
  const int threads = kernels::num_threads();

#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(planes); ++p) {
    std::vector<std::complex<T>> buf(h * w);
    const T* src = input.raw() + p * h * w;
    for (std::size_t i = 0; i < h * w; ++i) buf[i] = {src[i], T(0)};
    transform_plane(buf.data(), h, w, false);
    T* re = out.real.raw() + p * h * w;
    T* im = out.imag.raw() + p * h * w;
    for (std::size_t i = 0; i < h * w; ++i) {
      re[i] = buf[i].real();
      im[i] = buf[i].imag();
    }
    // Self-conjugate bins of a real signal are real.
    for (std::size_t r : {std::size_t{0}, h / 2}) {
      if (r != 0 && h % 2) continue;
      for (std::size_t c : {std::size_t{0}, w / 2}) {
        if (c != 0 && w % 2) continue;
        im[r * w + c] = T(0);
      }
    }
  }
  return out;
}

template <typename T>
ComplexPlane<T> fft2(const ComplexPlane<T>& input, bool inverse) {
  if (input.real.shape() != input.imag.shape()) {
    throw std::invalid_argument("fft2: real/imag shape mismatch " + shape_str(input.real.shape()) + " vs " +
                                shape_str(input.imag.shape()));
  }
  const auto& shape = input.real.shape();
  if (shape.size() < 2) throw std::invalid_argument("fft2: input needs at least two axes, got " + shape_str(shape));
  const std::size_t h = shape[shape.size() - 2];
  const std::size_t w = shape[shape.size() - 1];
  const std::size_t planes = input.real.size() / (h * w);
  ComplexPlane<T> out{Tensor<T>(shape), Tensor<T>(shape)};
  const T scale = inverse ? T(1) / static_cast<T>(h * w) : T(1);
  const int threads = kernels::num_threads();

#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(planes); ++p) {
    std::vector<std::complex<T>> buf(h * w);
    const T* re_in = input.real.raw() + p * h * w;
    const T* im_in = input.imag.raw() + p * h * w;
    for (std::size_t i = 0; i < h * w; ++i) buf[i] = {re_in[i], im_in[i]};
    transform_plane(buf.data(), h, w, inverse);
    T* re = out.real.raw() + p * h * w;
    T* im = out.imag.raw() + p * h * w;
    for (std::size_t i = 0; i < h * w; ++i) {
      re[i] = buf[i].real() * scale;
      im[i] = buf[i].imag() * scale;
    }
  }
  return out;
}

template void fft1d<float>(std::span<std::complex<float>>, bool);
template void fft1d<double>(std::span<std::complex<double>>, bool);
template ComplexPlane<float> fft2<float>(const Tensor<float>&);
template ComplexPlane<double> fft2<double>(const Tensor<double>&);
template ComplexPlane<float> fft2<float>(const ComplexPlane<float>&, bool);
template ComplexPlane<double> fft2<double>(const ComplexPlane<double>&, bool);

}  // namespace lvr
