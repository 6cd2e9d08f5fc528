// Serial reference kernels against the OpenMP versions on layer shapes
// from the shallow network and the blur used in preprocessing.

#include <benchmark/benchmark.h>

#include <vector>

#include "drgrade/imageproc.hpp"
#include "drgrade/kernels.hpp"
#include "drgrade/rng.hpp"

namespace {

using namespace drgrade;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

ConvGeometry conv_geometry(const benchmark::State& st) {
  ConvGeometry g;
  g.batch = 4;
  g.in_channels = static_cast<std::size_t>(st.range(0));
  g.out_channels = static_cast<std::size_t>(st.range(1));
  g.in_h = g.in_w = static_cast<std::size_t>(st.range(2));
  g.kernel_h = g.kernel_w = static_cast<std::size_t>(st.range(3));
  return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& st) {
  const ConvGeometry g = conv_geometry(st);
  const auto x = random_vec(g.input_size(), 1), w = random_vec(g.weight_size(), 2), b = random_vec(g.out_channels, 3);
  std::vector<float> y(g.output_size());
  for (auto _ : st) {
    if constexpr (Parallel)
      kernels::conv2d_forward<float>(g, x, w, b, y);
    else
      reference::conv2d_forward<float>(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * g.output_size() * g.in_channels * g.kernel_h *
                                                 g.kernel_w));
}

template <bool Parallel>
void BM_ConvBackwardParams(benchmark::State& st) {
  const ConvGeometry g = conv_geometry(st);
  const auto x = random_vec(g.input_size(), 1), dy = random_vec(g.output_size(), 2);
  std::vector<float> dw(g.weight_size()), db(g.out_channels);
  for (auto _ : st) {
    if constexpr (Parallel)
      kernels::conv2d_backward_params<float>(g, x, dy, dw, db);
    else
      reference::conv2d_backward_params<float>(g, x, dy, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool Parallel>
void BM_DenseForward(benchmark::State& st) {
  const std::size_t n = 32, d = static_cast<std::size_t>(st.range(0)), m = static_cast<std::size_t>(st.range(1));
  const auto x = random_vec(n * d, 1), w = random_vec(d * m, 2), b = random_vec(m, 3);
  std::vector<float> y(n * m);
  for (auto _ : st) {
    if constexpr (Parallel)
      kernels::dense_forward<float>(n, d, m, x, w, b, y);
    else
      reference::dense_forward<float>(n, d, m, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_Blur(benchmark::State& st) {
  const std::size_t side = static_cast<std::size_t>(st.range(0));
  const auto kernel = gaussian_kernel(10.0);
  const auto in = random_vec(side * side * 3, 1);
  std::vector<float> out(in.size());
  for (auto _ : st) {
    if constexpr (Parallel)
      kernels::separable_blur(side, side, 3, kernel, in, out);
    else
      reference::separable_blur(side, side, 3, kernel, in, out);
    benchmark::DoNotOptimize(out.data());
  }
}

// {in_channels, out_channels, side, kernel}
#define CONV_ARGS Args({3, 16, 128, 13})->Args({16, 32, 62, 11})->Args({32, 48, 26, 7})->Unit(benchmark::kMillisecond)

BENCHMARK(BM_ConvForward<false>)->CONV_ARGS;
BENCHMARK(BM_ConvForward<true>)->CONV_ARGS;
BENCHMARK(BM_ConvBackwardParams<false>)->CONV_ARGS;
BENCHMARK(BM_ConvBackwardParams<true>)->CONV_ARGS;
BENCHMARK(BM_DenseForward<false>)->Args({12288, 171})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseForward<true>)->Args({12288, 171})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Blur<false>)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Blur<true>)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
