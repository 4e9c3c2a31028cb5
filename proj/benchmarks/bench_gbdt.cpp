#include <benchmark/benchmark.h>

#include "livekt/gbdt.hpp"

#include "bench_common.hpp"

namespace {

void BM_gbdt_fit(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const auto table = livekt::bench::random_table(n, 10, 3);
  livekt::GBDTParams params;
  params.n_trees = 50;
  for (auto _ : state) {
    benchmark::DoNotOptimize(livekt::gbdt_fit(table, params));
  }
}

void BM_gbdt_predict(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const auto train = livekt::bench::random_table(n, 10, 3);
  const auto test = livekt::bench::random_table(256, 10, 4);
  livekt::GBDTParams params;
  params.n_trees = 50;
  const auto ens = livekt::gbdt_fit(train, params);
  for (auto _ : state) {
    benchmark::DoNotOptimize(livekt::gbdt_predict(ens, test));
  }
}

}  // namespace

BENCHMARK(BM_gbdt_fit)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gbdt_predict)->Arg(1024)->Unit(benchmark::kMillisecond);
