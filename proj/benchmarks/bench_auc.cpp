#include <benchmark/benchmark.h>

#include "livekt/evaluation.hpp"
#include "livekt/rng.hpp"

namespace {

void BM_auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  livekt::Rng rng(7);
  std::vector<double> scores(n);
  std::vector<std::int8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform();
    labels[i] = static_cast<std::int8_t>(rng.bernoulli(0.5) ? 1 : 0);
  }
  labels[0] = 0;
  labels[1] = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(livekt::auc(scores, labels));
  }
}

}  // namespace

BENCHMARK(BM_auc)->Arg(1000)->Arg(10000)->Arg(100000);
