#include <algorithm>
#include <atomic>
#include <cstdint>

#include "lvr/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lvr::kernels {

namespace {

std::atomic<int> g_threads{0};

using Index = std::ptrdiff_t;

// Range of output columns [lo, hi) whose tap `k` lands inside [0, extent).
struct TapRange {
  Index lo;
  Index hi;
};

TapRange valid_outputs(Index extent, Index out_extent, Index stride, Index pad, Index k) {
  // in = out * stride + k - pad, require 0 <= in < extent
  Index lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  Index hi = extent - 1 + pad - k;
  hi = hi < 0 ? 0 : hi / stride + 1;
  hi = std::min(hi, out_extent);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

void set_num_threads(int n) { g_threads.store(n < 0 ? 0 : n); }

int num_threads() {
  const int n = g_threads.load();
#ifdef _OPENMP
  return n > 0 ? n : omp_get_max_threads();
#else
  (void)n;
  return 1;
#endif
}

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const Index N = g.batch, C = g.in_channels, H = g.height, W = g.width, O = g.out_channels;
  const Index K = g.kernel, S = g.stride, P = g.padding;
  const Index Ho = g.out_height(), Wo = g.out_width();
  const Index in_pg = g.in_per_group(), out_pg = g.out_per_group();
  const int threads = num_threads();

#pragma omp parallel for collapse(2) schedule(static) num_threads(threads)
  for (Index n = 0; n < N; ++n) {
    for (Index o = 0; o < O; ++o) {
      T* out = output.data() + (n * O + o) * Ho * Wo;
      const T b = bias.empty() ? T(0) : bias[o];
      std::fill(out, out + Ho * Wo, b);
      const Index group = o / out_pg;
      for (Index cl = 0; cl < in_pg; ++cl) {
        const Index c = group * in_pg + cl;
        const T* in = input.data() + (n * C + c) * H * W;
        const T* wk = weight.data() + (o * in_pg + cl) * K * K;
        for (Index kh = 0; kh < K; ++kh) {
          const TapRange rows = valid_outputs(H, Ho, S, P, kh);
          for (Index kw = 0; kw < K; ++kw) {
            const T wv = wk[kh * K + kw];
            const TapRange cols = valid_outputs(W, Wo, S, P, kw);
            for (Index oh = rows.lo; oh < rows.hi; ++oh) {
              const T* in_row = in + (oh * S + kh - P) * W + (kw - P);
              T* out_row = out + oh * Wo;
              if (S == 1) {
                for (Index ow = cols.lo; ow < cols.hi; ++ow) out_row[ow] += wv * in_row[ow];
              } else {
                for (Index ow = cols.lo; ow < cols.hi; ++ow) out_row[ow] += wv * in_row[ow * S];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const T> grad_output, std::span<const T> weight,
                           std::span<T> grad_input) {
  const Index N = g.batch, C = g.in_channels, H = g.height, W = g.width, O = g.out_channels;
  const Index K = g.kernel, S = g.stride, P = g.padding;
  const Index Ho = g.out_height(), Wo = g.out_width();
  const Index in_pg = g.in_per_group(), out_pg = g.out_per_group();
  const int threads = num_threads();

#pragma omp parallel for collapse(2) schedule(static) num_threads(threads)
  for (Index n = 0; n < N; ++n) {
    for (Index c = 0; c < C; ++c) {
      T* gin = grad_input.data() + (n * C + c) * H * W;
      const Index group = c / in_pg;
      const Index cl = c % in_pg;
      for (Index ol = 0; ol < out_pg; ++ol) {
        const Index o = group * out_pg + ol;
        const T* gout = grad_output.data() + (n * O + o) * Ho * Wo;
        const T* wk = weight.data() + (o * in_pg + cl) * K * K;
        for (Index kh = 0; kh < K; ++kh) {
          const TapRange rows = valid_outputs(H, Ho, S, P, kh);
          for (Index kw = 0; kw < K; ++kw) {
            const T wv = wk[kh * K + kw];
            const TapRange cols = valid_outputs(W, Wo, S, P, kw);
            for (Index oh = rows.lo; oh < rows.hi; ++oh) {
              T* gin_row = gin + (oh * S + kh - P) * W + (kw - P);
              const T* gout_row = gout + oh * Wo;
              if (S == 1) {
                for (Index ow = cols.lo; ow < cols.hi; ++ow) gin_row[ow] += wv * gout_row[ow];
              } else {
                for (Index ow = cols.lo; ow < cols.hi; ++ow) gin_row[ow * S] += wv * gout_row[ow];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const Conv2dGeometry& g, std::span<const T> grad_output, std::span<const T> input,
                            std::span<T> grad_weight, std::span<T> grad_bias) {
  const Index N = g.batch, C = g.in_channels, H = g.height, W = g.width, O = g.out_channels;
  const Index K = g.kernel, S = g.stride, P = g.padding;
  const Index Ho = g.out_height(), Wo = g.out_width();
  const Index in_pg = g.in_per_group(), out_pg = g.out_per_group();
  const int threads = num_threads();

#pragma omp parallel for schedule(static) num_threads(threads)
  for (Index o = 0; o < O; ++o) {
    const Index group = o / out_pg;
    if (!grad_bias.empty()) {
      T acc = 0;
      for (Index n = 0; n < N; ++n) {
        const T* gout = grad_output.data() + (n * O + o) * Ho * Wo;
        for (Index i = 0; i < Ho * Wo; ++i) acc += gout[i];
      }
      grad_bias[o] += acc;
    }
    for (Index cl = 0; cl < in_pg; ++cl) {
      const Index c = group * in_pg + cl;
      T* gw = grad_weight.data() + (o * in_pg + cl) * K * K;
      for (Index kh = 0; kh < K; ++kh) {
        const TapRange rows = valid_outputs(H, Ho, S, P, kh);
        for (Index kw = 0; kw < K; ++kw) {
          const TapRange cols = valid_outputs(W, Wo, S, P, kw);
          T acc = 0;
          for (Index n = 0; n < N; ++n) {
            const T* gout = grad_output.data() + (n * O + o) * Ho * Wo;
            const T* in = input.data() + (n * C + c) * H * W;
            for (Index oh = rows.lo; oh < rows.hi; ++oh) {
              const T* in_row = in + (oh * S + kh - P) * W + (kw - P);
              const T* gout_row = gout + oh * Wo;
              T row_acc = 0;
              for (Index ow = cols.lo; ow < cols.hi; ++ow) row_acc += gout_row[ow] * in_row[ow * S];
              acc += row_acc;
            }
          }
          gw[kh * K + kw] += acc;
        }
      }
    }
  }
}

#define LVR_INSTANTIATE_CONV(T)                                                                                   \
  template void conv2d_forward<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,                \
                                  std::span<const T>, std::span<T>);                                            \
  template void conv2d_backward_input<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,         \
                                         std::span<T>);                                                         \
  template void conv2d_backward_weight<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,        \
                                          std::span<T>, std::span<T>);

LVR_INSTANTIATE_CONV(float)
LVR_INSTANTIATE_CONV(double)

}  // namespace lvr::kernels
