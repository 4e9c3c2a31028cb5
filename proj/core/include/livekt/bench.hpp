#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "livekt/minipfn.hpp"

namespace livekt {

struct BenchPoint {
  std::string kind;  // "N" or "T"
  int size = 0;
  double median_seconds = 0.0;
};

struct BenchReport {
  std::vector<BenchPoint> points;
  std::optional<double> slope_n;  // log-log slope of time vs train rows
  std::optional<double> slope_t;  // log-log slope of time vs horizon
};

// Times predict_in_context on synthetic tables: across train-row counts at a
// fixed horizon, and across horizons at a fixed train-row count. Each cell is
// the median of `reps` runs.
BenchReport run_scaling_bench(const MiniPFNWeights& weights, const std::vector<int>& n_sizes,
                              int fixed_T, const std::vector<int>& t_sizes, int fixed_n,
                              int n_test_rows = 64, int reps = 5, std::uint64_t seed = 0);

// Least-squares slope of log(seconds) against log(size); nullopt under two points.
std::optional<double> loglog_slope(const std::vector<BenchPoint>& points);

std::string bench_to_csv(const BenchReport& report);

}  // namespace livekt
