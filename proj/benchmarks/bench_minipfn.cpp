#include <benchmark/benchmark.h>

#include "livekt/minipfn.hpp"

#include "bench_common.hpp"

namespace {

void BM_minipfn_predict(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const auto T = static_cast<int>(state.range(1));
  const auto weights = livekt::init_weights<float>(livekt::MiniPFNConfig{}, 1);
  const auto train = livekt::bench::random_table(n, T, 5);
  const auto test = livekt::bench::random_table(64, T, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(livekt::predict_in_context(weights, train, test));
  }
}

void BM_minipfn_embed_heavy_vocab(benchmark::State& state) {
  const auto weights = livekt::init_weights<float>(livekt::MiniPFNConfig{}, 1);
  const auto train = livekt::bench::random_table(256, 10, 7, 20000);
  const auto test = livekt::bench::random_table(64, 10, 8, 20000);
  for (auto _ : state) {
    benchmark::DoNotOptimize(livekt::predict_in_context(weights, train, test));
  }
}

}  // namespace

BENCHMARK(BM_minipfn_predict)
    ->Args({128, 10})
    ->Args({512, 10})
    ->Args({1024, 10})
    ->Args({512, 20})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_minipfn_embed_heavy_vocab)->Unit(benchmark::kMillisecond);
