#include <benchmark/benchmark.h>

#include <vector>

#include "lvr/kernels.hpp"
#include "lvr/rng.hpp"

namespace {

using lvr::kernels::Conv2dGeometry;

// A 3x3 layer at the training resolution of the default width.
Conv2dGeometry geometry(std::size_t channels, std::size_t groups) {
  Conv2dGeometry g;
  g.batch = 2;
  g.in_channels = channels;
  g.out_channels = channels;
  g.height = 64;
  g.width = 64;
  g.kernel = 3;
  g.padding = 1;
  g.groups = groups;
  return g;
}

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  lvr::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

struct Buffers {
  std::vector<float> x, w, b, y;
  explicit Buffers(const Conv2dGeometry& g)
      : x(random_vector(g.batch * g.in_channels * g.height * g.width, 1)),
        w(random_vector(g.out_channels * g.in_per_group() * g.kernel * g.kernel, 2)),
        b(random_vector(g.out_channels, 3)),
        y(g.batch * g.out_channels * g.out_height() * g.out_width()) {}
};

template <bool Parallel>
void BM_Forward(benchmark::State& state) {
  const auto g = geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  Buffers buf(g);
  for (auto _ : state) {
    if constexpr (Parallel) {
      lvr::kernels::conv2d_forward<float>(g, buf.x, buf.w, buf.b, buf.y);
    } else {
      lvr::kernels::serial::conv2d_forward<float>(g, buf.x, buf.w, buf.b, buf.y);
    }
    benchmark::DoNotOptimize(buf.y.data());
  }
}

template <bool Parallel>
void BM_BackwardInput(benchmark::State& state) {
  const auto g = geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  Buffers buf(g);
  std::vector<float> gx(buf.x.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      lvr::kernels::conv2d_backward_input<float>(g, buf.y, buf.w, gx);
    } else {
      lvr::kernels::serial::conv2d_backward_input<float>(g, buf.y, buf.w, gx);
    }
    benchmark::DoNotOptimize(gx.data());
  }
}

template <bool Parallel>
void BM_BackwardWeight(benchmark::State& state) {
  const auto g = geometry(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  Buffers buf(g);
  std::vector<float> gw(buf.w.size()), gb(buf.b.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      lvr::kernels::conv2d_backward_weight<float>(g, buf.y, buf.x, gw, gb);
    } else {
      lvr::kernels::serial::conv2d_backward_weight<float>(g, buf.y, buf.x, gw, gb);
    }
    benchmark::DoNotOptimize(gw.data());
  }
}

// {channels, groups}: dense and depthwise.
#define LVR_CONV_ARGS ->Args({32, 1})->Args({64, 64})->Unit(benchmark::kMicrosecond)

BENCHMARK(BM_Forward<false>) LVR_CONV_ARGS;
BENCHMARK(BM_Forward<true>) LVR_CONV_ARGS;
BENCHMARK(BM_BackwardInput<false>) LVR_CONV_ARGS;
BENCHMARK(BM_BackwardInput<true>) LVR_CONV_ARGS;
BENCHMARK(BM_BackwardWeight<false>) LVR_CONV_ARGS;
BENCHMARK(BM_BackwardWeight<true>) LVR_CONV_ARGS;

}  // namespace

BENCHMARK_MAIN();
