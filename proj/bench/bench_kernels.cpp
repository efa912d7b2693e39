// Throughput comparison of the OpenMP kernels against the serial reference,
// plus end-to-end forward and bootstrap timings at audit-typical shapes.
//
//   cmake --build build --target posbias_bench && ./build/bench/posbias_bench

#include <benchmark/benchmark.h>

#include <vector>

#include "posbias/kernels.hpp"
#include "posbias/model.hpp"
#include "posbias/rng.hpp"
#include "posbias/stats.hpp"

namespace {

using namespace posbias;

std::vector<float> random_vec(size_t n, uint64_t seed) {
  SplitMix64 g(seed);
  std::vector<float> v(n);
  for (auto& x : v) {
    x = g.next_gauss_f();
  }
  return v;
}

void BM_MatmulSerial(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto x = random_vec(static_cast<size_t>(n) * n, 1);
  const auto w = random_vec(static_cast<size_t>(n) * n, 2);
  std::vector<float> y(static_cast<size_t>(n) * n);
  for (auto _ : state) {
    kernels::serial::matmul(x.data(), w.data(), y.data(), n, n, n);
    benchmark::DoNotOptimize(y.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * int64_t{2} * n * n * n);
}
BENCHMARK(BM_MatmulSerial)->Arg(64)->Arg(128)->Arg(256);

void BM_MatmulOpenMP(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto x = random_vec(static_cast<size_t>(n) * n, 1);
  const auto w = random_vec(static_cast<size_t>(n) * n, 2);
  std::vector<float> y(static_cast<size_t>(n) * n);
  for (auto _ : state) {
    kernels::matmul(x.data(), w.data(), y.data(), n, n, n);
    benchmark::DoNotOptimize(y.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * int64_t{2} * n * n * n);
}
BENCHMARK(BM_MatmulOpenMP)->Arg(64)->Arg(128)->Arg(256);

void BM_RmsnormSerial(benchmark::State& state) {
  const int rows = 64, width = 256;
  const auto x = random_vec(static_cast<size_t>(rows) * width, 3);
  const auto gain = random_vec(width, 4);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    kernels::serial::rmsnorm_rows(x.data(), gain.data(), y.data(), rows, width,
                                  1e-5f);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_RmsnormSerial);

void BM_RmsnormOpenMP(benchmark::State& state) {
  const int rows = 64, width = 256;
  const auto x = random_vec(static_cast<size_t>(rows) * width, 3);
  const auto gain = random_vec(width, 4);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    kernels::rmsnorm_rows(x.data(), gain.data(), y.data(), rows, width, 1e-5f);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_RmsnormOpenMP);

void BM_ForwardPass(benchmark::State& state) {
  model::ModelConfig cfg{4, 2, 64, 128, 512, 160, 1e-5f};
  const auto weights = model::init_random(cfg, 7);
  SplitMix64 g(11);
  std::vector<int> tokens(48);
  for (auto& t : tokens) {
    t = static_cast<int>(g.next_below(static_cast<uint64_t>(cfg.vocab_size)));
  }
  for (auto _ : state) {
    auto result = model::forward(weights, tokens);
    benchmark::DoNotOptimize(result.final_logits.data());
  }
}
BENCHMARK(BM_ForwardPass);

void BM_ClusterBootstrap(benchmark::State& state) {
  const int n = 153;
  SplitMix64 g(5);
  std::vector<double> deltas(n);
  std::vector<int> clusters(n);
  for (int i = 0; i < n; ++i) {
    deltas[static_cast<size_t>(i)] = g.next_gauss() * 0.05;
    clusters[static_cast<size_t>(i)] = i;
  }
  const int resamples = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto ci = stats::cluster_bootstrap_ci(deltas, clusters, resamples, 42);
    benchmark::DoNotOptimize(ci);
  }
}
BENCHMARK(BM_ClusterBootstrap)->Arg(200)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
