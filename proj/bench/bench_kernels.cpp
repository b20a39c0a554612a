// Serial reference kernels vs their OpenMP versions.
//
//   bench_kernels [--benchmark_filter=...]
// Thread count follows XNET_THREADS (or the OpenMP default).

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "xnet/kernels/parallel.hpp"
#include "xnet/kernels/serial.hpp"
#include "xnet/ops.hpp"
#include "xnet/threads.hpp"

namespace {

using namespace xnet;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.f);
    if constexpr (Parallel) {
      kernels::parallel::gemm(n, n, n, a.data(), b.data(), c.data());
    } else {
      kernels::serial::gemm(n, n, n, a.data(), b.data(), c.data());
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

kernels::ConvGeometry geometry(std::size_t channels, std::size_t side) {
  return {channels, side, side, 3, 3, 1, 1, side, side};
}

template <bool Parallel>
void BM_im2col(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto g = geometry(64, side);
  const auto x = random_vec(64 * side * side, 3);
  std::vector<float> cols(g.patch_size() * g.out_plane());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::im2col(g, x.data(), cols.data());
    } else {
      kernels::serial::im2col(g, x.data(), cols.data());
    }
    benchmark::DoNotOptimize(cols.data());
  }
}

template <bool Parallel>
void BM_instance_norm(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const std::size_t channels = 64, plane = side * side;
  const auto x = random_vec(channels * plane, 4);
  const std::vector<float> gain(channels, 1.f), bias(channels, 0.f);
  std::vector<float> xhat(x.size()), y(x.size()), inv(channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::instance_norm_forward(channels, channels, plane, x.data(), gain.data(),
                                               bias.data(), 1e-5f, xhat.data(), y.data(), inv.data());
    } else {
      kernels::serial::instance_norm_forward(channels, channels, plane, x.data(), gain.data(),
                                             bias.data(), 1e-5f, xhat.data(), y.data(), inv.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

// Full conv2d forward through the op layer (always the parallel kernels).
void BM_conv2d(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor x({1, 64, side, side}, random_vec(64 * side * side, 5));
  const Tensor k({64, 64, 3, 3}, random_vec(64 * 64 * 9, 6));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, 1));
}

BENCHMARK(BM_gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_im2col<false>)->Arg(32)->Arg(64);
BENCHMARK(BM_im2col<true>)->Arg(32)->Arg(64);
BENCHMARK(BM_instance_norm<false>)->Arg(32)->Arg(64);
BENCHMARK(BM_instance_norm<true>)->Arg(32)->Arg(64);
BENCHMARK(BM_conv2d)->Arg(32)->Arg(64);

}  // namespace

int main(int argc, char** argv) {
  configure_threads();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::AddCustomContext("threads", std::to_string(max_threads()));
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
