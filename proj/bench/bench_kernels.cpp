// Serial reference loops against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "noisycon/exact_chain.hpp"
#include "noisycon/montecarlo.hpp"

using namespace noisycon;

static void BM_EnsembleSerial(benchmark::State& state) {
  const auto spec = GraphProcessSpec::binomial(16, 0.5);
  for (auto _ : state)
    benchmark::DoNotOptimize(run_ensemble_serial(spec, NoiseSpec(1.05), InitAllPlus{}, 200, state.range(0), 1));
}
BENCHMARK(BM_EnsembleSerial)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_EnsembleParallel(benchmark::State& state) {
  const auto spec = GraphProcessSpec::binomial(16, 0.5);
  for (auto _ : state)
    benchmark::DoNotOptimize(run_ensemble(spec, NoiseSpec(1.05), InitAllPlus{}, 200, state.range(0), 1));
}
BENCHMARK(BM_EnsembleParallel)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_FixedMatrixSerial(benchmark::State& state) {
  const Graph g = make_ring(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(transition_matrix_fixed_serial(g, 1.5));
}
BENCHMARK(BM_FixedMatrixSerial)->Arg(8)->Arg(11)->Unit(benchmark::kMillisecond);

static void BM_FixedMatrixParallel(benchmark::State& state) {
  const Graph g = make_ring(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(transition_matrix_fixed(g, 1.5));
}
BENCHMARK(BM_FixedMatrixParallel)->Arg(8)->Arg(11)->Unit(benchmark::kMillisecond);

static void BM_BinomialMatrixSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(transition_matrix_binomial_serial(5, 0.5, 1.5));
}
BENCHMARK(BM_BinomialMatrixSerial)->Unit(benchmark::kMillisecond);

static void BM_BinomialMatrixParallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(transition_matrix_binomial(5, 0.5, 1.5));
}
BENCHMARK(BM_BinomialMatrixParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
