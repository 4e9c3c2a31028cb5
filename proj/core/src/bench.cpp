#include "livekt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "livekt/error.hpp"
#include "livekt/rng.hpp"

namespace livekt {

namespace {

EncodedTable random_table(int n_rows, int T, Rng& rng) {
  EncodedTable table;
  table.T = T;
  table.rows.reserve(static_cast<std::size_t>(n_rows));
  for (int r = 0; r < n_rows; ++r) {
    EncodedRow row;
    row.student_idx = r + 1;
    row.observed_len = T;
    row.questions.resize(static_cast<std::size_t>(T));
    row.skills.resize(static_cast<std::size_t>(T));
    row.past_correct.resize(static_cast<std::size_t>(T - 1));
    for (auto& q : row.questions) q = 1 + static_cast<std::int32_t>(rng.below(97));
    for (auto& s : row.skills) s = 1 + static_cast<std::int32_t>(rng.below(13));
    for (auto& c : row.past_correct) c = rng.bernoulli(0.5) ? kCorrectCode : kIncorrectCode;
    row.label = static_cast<std::int8_t>(rng.bernoulli(0.5) ? 1 : 0);
    table.rows.push_back(std::move(row));
  }
  return table;
}

double time_predict(const MiniPFNWeights& weights, const EncodedTable& train,
                    const EncodedTable& test, int reps) {
  using Clock = std::chrono::steady_clock;
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    volatile double sink = predict_in_context(weights, train, test).front();
    (void)sink;
    times.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

std::optional<double> loglog_slope(const std::vector<BenchPoint>& points) {
  if (points.size() < 2) return std::nullopt;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : points) {
    const double x = std::log(static_cast<double>(p.size));
    const double y = std::log(std::max(p.median_seconds, 1e-12));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const auto n = static_cast<double>(points.size());
  const double denom = n * sxx - sx * sx;
  if (denom <= 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / denom;
}

BenchReport run_scaling_bench(const MiniPFNWeights& weights, const std::vector<int>& n_sizes,
                              int fixed_T, const std::vector<int>& t_sizes, int fixed_n,
                              int n_test_rows, int reps, std::uint64_t seed) {
  if (reps < 1) throw UsageError("bench: reps must be >= 1");
  BenchReport report;

  std::vector<BenchPoint> n_points, t_points;
  for (const auto n : n_sizes) {
    if (n < 1) throw UsageError("bench: sizes must be >= 1");
    Rng rng(hash_combine(seed, static_cast<std::uint64_t>(n)));
    const EncodedTable train = random_table(n, fixed_T, rng);
    const EncodedTable test = random_table(n_test_rows, fixed_T, rng);
    n_points.push_back({"N", n, time_predict(weights, train, test, reps)});
  }
  for (const auto T : t_sizes) {
    if (T < 2) throw UsageError("bench: horizons must be >= 2");
    Rng rng(hash_combine(seed, 0x7000ULL + static_cast<std::uint64_t>(T)));
    const EncodedTable train = random_table(fixed_n, T, rng);
    const EncodedTable test = random_table(n_test_rows, T, rng);
    t_points.push_back({"T", T, time_predict(weights, train, test, reps)});
  }

  report.slope_n = loglog_slope(n_points);
  report.slope_t = loglog_slope(t_points);
  report.points = std::move(n_points);
  report.points.insert(report.points.end(), t_points.begin(), t_points.end());
  return report;
}

std::string bench_to_csv(const BenchReport& report) {
  std::ostringstream os;
  os << "kind,size,median_seconds\n";
  for (const auto& p : report.points) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", p.median_seconds);
    os << p.kind << ',' << p.size << ',' << buf << '\n';
  }
  return os.str();
}

}  // namespace livekt
