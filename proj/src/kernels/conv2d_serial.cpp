#include "lvr/kernels.hpp"

namespace lvr::kernels::serial {

namespace {
using Index = std::ptrdiff_t;
}

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const Index N = g.batch, C = g.in_channels, H = g.height, W = g.width, O = g.out_channels;
  const Index K = g.kernel, S = g.stride, P = g.padding;
  const Index Ho = g.out_height(), Wo = g.out_width();
  const Index in_pg = g.in_per_group(), out_pg = g.out_per_group();

  for (Index n = 0; n < N; ++n)
    for (Index o = 0; o < O; ++o)
      for (Index oh = 0; oh < Ho; ++oh)
        for (Index ow = 0; ow < Wo; ++ow) {
          T acc = bias.empty() ? T(0) : bias[o];
          const Index group = o / out_pg;
          for (Index cl = 0; cl < in_pg; ++cl)
            for (Index kh = 0; kh < K; ++kh)
              for (Index kw = 0; kw < K; ++kw) {
                const Index ih = oh * S + kh - P;
                const Index iw = ow * S + kw - P;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                const Index c = group * in_pg + cl;
                acc += weight[((o * in_pg + cl) * K + kh) * K + kw] * input[((n * C + c) * H + ih) * W + iw];
              }
          output[((n * O + o) * Ho + oh) * Wo + ow] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const T> grad_output, std::span<const T> weight,
                           std::span<T> grad_input) {
  const Index N = g.batch, C = g.in_channels, H = g.height, W = g.width, O = g.out_channels;
  const Index K = g.kernel, S = g.stride, P = g.padding;
  const Index Ho = g.out_height(), Wo = g.out_width();
  const Index in_pg = g.in_per_group(), out_pg = g.out_per_group();

  for (Index n = 0; n < N; ++n)
    for (Index o = 0; o < O; ++o)
      for (Index oh = 0; oh < Ho; ++oh)
        for (Index ow = 0; ow < Wo; ++ow) {
          const T go = grad_output[((n * O + o) * Ho + oh) * Wo + ow];
          const Index group = o / out_pg;
          for (Index cl = 0; cl < in_pg; ++cl)
            for (Index kh = 0; kh < K; ++kh)
              for (Index kw = 0; kw < K; ++kw) {
                const Index ih = oh * S + kh - P;
                const Index iw = ow * S + kw - P;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                const Index c = group * in_pg + cl;
                grad_input[((n * C + c) * H + ih) * W + iw] += go * weight[((o * in_pg + cl) * K + kh) * K + kw];
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

  for (Index n = 0; n < N; ++n)
    for (Index o = 0; o < O; ++o)
      for (Index oh = 0; oh < Ho; ++oh)
        for (Index ow = 0; ow < Wo; ++ow) {
          const T go = grad_output[((n * O + o) * Ho + oh) * Wo + ow];
          if (!grad_bias.empty()) grad_bias[o] += go;
          const Index group = o / out_pg;
          for (Index cl = 0; cl < in_pg; ++cl)
            for (Index kh = 0; kh < K; ++kh)
              for (Index kw = 0; kw < K; ++kw) {
                const Index ih = oh * S + kh - P;
                const Index iw = ow * S + kw - P;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                const Index c = group * in_pg + cl;
                grad_weight[((o * in_pg + cl) * K + kh) * K + kw] += go * input[((n * C + c) * H + ih) * W + iw];
              }
        }
}

#define LVR_INSTANTIATE_SERIAL_CONV(T)                                                                            \
  template void conv2d_forward<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,                \
                                  std::span<const T>, std::span<T>);                                            \
  template void conv2d_backward_input<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,         \
                                         std::span<T>);                                                         \
  template void conv2d_backward_weight<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,        \
                                          std::span<T>, std::span<T>);

LVR_INSTANTIATE_SERIAL_CONV(float)
LVR_INSTANTIATE_SERIAL_CONV(double)

}  // namespace lvr::kernels::serial
