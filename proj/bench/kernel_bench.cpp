// OpenMP kernels against the serial reference loops.
#include <benchmark/benchmark.h>

#include <random>
#include <thread>
#include <vector>

#include "landscape/kernels.hpp"

namespace {

using landscape::kernels::ConvGeometry;

std::vector<float> random_vector(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Desk-model layers at an expanded 80x80 input: stem, stage-1 3x3, stage-2
// strided 3x3.
ConvGeometry layer(int which, std::size_t batch) {
  switch (which) {
    case 0:
      return {batch, 3, 80, 80, 32, 7, 7, 2, 3};
    case 1:
      return {batch, 32, 40, 40, 32, 3, 3, 1, 1};
    default:
      return {batch, 32, 40, 40, 64, 3, 3, 2, 1};
  }
}

void set_flops(benchmark::State& state, const ConvGeometry& g, double passes) {
  const double macs = static_cast<double>(g.batch * g.out_channels * g.out_h() * g.out_w() * g.patch());
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * macs * passes * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate,
                         benchmark::Counter::kIs1000);
}

void BM_GemmOptimized(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1);
  const auto b = random_vector(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    landscape::kernels::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n * state.iterations(), benchmark::Counter::kIsRate,
                                                 benchmark::Counter::kIs1000);
}

void BM_GemmReference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1);
  const auto b = random_vector(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    landscape::kernels::reference::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n * state.iterations(), benchmark::Counter::kIsRate,
                                                 benchmark::Counter::kIs1000);
}

template <bool Optimized>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = layer(static_cast<int>(state.range(0)), 8);
  landscape::kernels::set_num_threads(static_cast<int>(state.range(1)));
  const auto x = random_vector(g.batch * g.in_plane(), 3);
  const auto w = random_vector(g.weight_size(), 4);
  std::vector<float> y(g.batch * g.out_plane());
  for (auto _ : state) {
    if constexpr (Optimized) {
      landscape::kernels::conv2d_forward(g, x.data(), w.data(), static_cast<const float*>(nullptr), y.data());
    } else {
      landscape::kernels::reference::conv2d_forward(g, x.data(), w.data(), static_cast<const float*>(nullptr),
                                                    y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
  set_flops(state, g, 1.0);
  landscape::kernels::set_num_threads(1);
}

template <bool Optimized>
void BM_ConvBackward(benchmark::State& state) {
  const ConvGeometry g = layer(static_cast<int>(state.range(0)), 8);
  landscape::kernels::set_num_threads(static_cast<int>(state.range(1)));
  const auto x = random_vector(g.batch * g.in_plane(), 3);
  const auto w = random_vector(g.weight_size(), 4);
  const auto dy = random_vector(g.batch * g.out_plane(), 5);
  std::vector<float> dx(g.batch * g.in_plane());
  std::vector<float> dw(g.weight_size());
  for (auto _ : state) {
    std::fill(dx.begin(), dx.end(), 0.0f);
    std::fill(dw.begin(), dw.end(), 0.0f);
    if constexpr (Optimized) {
      landscape::kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(),
                                          static_cast<float*>(nullptr));
    } else {
      landscape::kernels::reference::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(),
                                                     static_cast<float*>(nullptr));
    }
    benchmark::DoNotOptimize(dx.data());
  }
  set_flops(state, g, 2.0);
  landscape::kernels::set_num_threads(1);
}

void thread_args(benchmark::internal::Benchmark* b) {
  for (int layer_id = 0; layer_id < 3; ++layer_id) {
    b->Args({layer_id, 1});
    if (std::thread::hardware_concurrency() > 1) b->Args({layer_id, static_cast<int>(std::thread::hardware_concurrency())});
  }
}

}  // namespace

BENCHMARK(BM_GemmOptimized)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmReference)->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<true>)->Apply(thread_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Args({0, 1})->Args({1, 1})->Args({2, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Apply(thread_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Args({0, 1})->Args({1, 1})->Args({2, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
