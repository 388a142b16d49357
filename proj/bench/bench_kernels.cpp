// Serial reference kernels vs. the OpenMP kernels on stage-sized shapes.
#include <benchmark/benchmark.h>

#include <vector>

#include "dpnse/kernels.hpp"
#include "dpnse/rng.hpp"

namespace {

using dpnse::ConvGeometry;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  dpnse::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

ConvGeometry geometry(const benchmark::State& state) {
  ConvGeometry g;
  g.batch = 8;
  g.in_channels = static_cast<std::size_t>(state.range(0));
  g.out_channels = static_cast<std::size_t>(state.range(0));
  g.in_h = g.in_w = static_cast<std::size_t>(state.range(1));
  g.kernel_h = g.kernel_w = 3;
  g.pad = 1;
  return g;
}

template <auto Kernel>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const auto x = random_buffer(g.input_size(), 1);
  const auto w = random_buffer(g.weight_size(), 2);
  std::vector<double> y(g.output_size());
  for (auto _ : state) {
    Kernel(g, x, w, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * g.output_size() *
                                                    g.in_per_group() * 9));
}

template <auto Kernel>
void BM_ConvBackwardInput(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const auto w = random_buffer(g.weight_size(), 2);
  const auto dy = random_buffer(g.output_size(), 3);
  std::vector<double> dx(g.input_size());
  for (auto _ : state) {
    Kernel(g, w, dy, dx);
    benchmark::DoNotOptimize(dx.data());
  }
}

template <auto Kernel>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const auto x = random_buffer(g.input_size(), 1);
  const auto dy = random_buffer(g.output_size(), 3);
  std::vector<double> dw(g.weight_size());
  for (auto _ : state) {
    Kernel(g, x, dy, dw);
    benchmark::DoNotOptimize(dw.data());
  }
}

template <auto Kernel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 4);
  const auto b = random_buffer(n * n, 5);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Kernel(n, n, n, a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

namespace k = dpnse::kernels;

BENCHMARK(BM_ConvForward<k::serial::conv2d_forward>)->Args({8, 16})->Args({16, 32});
BENCHMARK(BM_ConvForward<k::conv2d_forward>)->Args({8, 16})->Args({16, 32});
BENCHMARK(BM_ConvBackwardInput<k::serial::conv2d_backward_input>)->Args({8, 16})->Args({16, 32});
BENCHMARK(BM_ConvBackwardInput<k::conv2d_backward_input>)->Args({8, 16})->Args({16, 32});
BENCHMARK(BM_ConvBackwardWeight<k::serial::conv2d_backward_weight>)->Args({8, 16})->Args({16, 32});
BENCHMARK(BM_ConvBackwardWeight<k::conv2d_backward_weight>)->Args({8, 16})->Args({16, 32});
BENCHMARK(BM_Matmul<k::serial::matmul>)->Arg(64)->Arg(128);
BENCHMARK(BM_Matmul<k::matmul>)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
