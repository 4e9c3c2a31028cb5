#include "livekt/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "livekt/encoding.hpp"
#include "livekt/error.hpp"

namespace livekt {

void LiveSchedule::validate() const {
  if (horizons.empty()) throw UsageError("schedule must contain at least one horizon");
  std::int32_t prev = 1;
  for (const auto T : horizons) {
    if (T < 2) throw UsageError("horizon must be >= 2, got " + std::to_string(T));
    if (T <= prev && prev != 1) throw UsageError("horizons must be strictly increasing");
    prev = T;
  }
}

double auc(const std::vector<double>& scores, const std::vector<std::int8_t>& labels) {
  if (scores.size() != labels.size()) throw RuntimeError("auc: scores/labels length mismatch");
  const std::size_t n = scores.size();

  std::size_t n_pos = 0;
  for (const auto y : labels) n_pos += static_cast<std::size_t>(y != 0);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw RuntimeError("AUC undefined: labels are single-class");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups, accumulate positive ranks.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }

  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

Metrics compute_metrics(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw RuntimeError("compute_metrics: no records");

  Metrics m;
  std::vector<double> scores;
  std::vector<std::int8_t> labels;
  scores.reserve(records.size());
  labels.reserve(records.size());

  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& r : records) {
    scores.push_back(r.score);
    labels.push_back(r.truth);
    const double p = std::clamp(r.score, 1e-7, 1.0 - 1e-7);
    loss += r.truth ? -std::log(p) : -std::log(1.0 - p);
    const int pred = r.score >= 0.5 ? 1 : 0;  // tie at 0.5 predicts 1
    correct += static_cast<std::size_t>(pred == r.truth);
  }
  m.logloss = loss / static_cast<double>(records.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());

  const bool has_pos = std::any_of(labels.begin(), labels.end(), [](std::int8_t y) { return y != 0; });
  const bool has_neg = std::any_of(labels.begin(), labels.end(), [](std::int8_t y) { return y == 0; });
  if (has_pos && has_neg) m.auc = auc(scores, labels);
  return m;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EvalResult run_live_eval(Predictor& predictor, const Dataset& dataset, const Split& split,
                         const LiveSchedule& schedule, std::uint64_t seed,
                         const std::string& dataset_name) {
  schedule.validate();
  predictor.reseed(seed);

  using Clock = std::chrono::steady_clock;
  const auto seconds = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };

  EvalResult result;
  std::vector<double> cell_times;

  for (const auto T : schedule.horizons) {
    const auto t0 = Clock::now();
    const TablePair tables = build_tables(dataset, split, T, T, T - 1);
    const auto t1 = Clock::now();
    predictor.prepare(tables.train);
    const auto t2 = Clock::now();
    const std::vector<double> scores = predictor.predict(tables.train, tables.test);
    const auto t3 = Clock::now();

    if (scores.size() != tables.test.rows.size()) {
      throw RuntimeError("predictor '" + predictor.name() + "' returned " +
                         std::to_string(scores.size()) + " scores for " +
                         std::to_string(tables.test.rows.size()) + " test rows");
    }
    std::vector<PredictionRecord> cell_records;
    cell_records.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double s = scores[i];
      if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
        throw RuntimeError("predictor '" + predictor.name() + "' emitted invalid score " +
                           std::to_string(s) + " at test row " + std::to_string(i));
      }
      PredictionRecord rec;
      rec.student_idx = tables.test.rows[i].student_idx;
      rec.T = T;
      rec.score = s;
      rec.truth = tables.test.rows[i].label;
      cell_records.push_back(rec);
    }

    const Metrics m = compute_metrics(cell_records);
    EvalEntry entry;
    entry.dataset = dataset_name;
    entry.model = predictor.name();
    entry.T = T;
    entry.auc = m.auc;
    entry.accuracy = m.accuracy;
    entry.logloss = m.logloss;
    entry.n_test_rows = static_cast<std::int32_t>(cell_records.size());
    entry.fit_seconds = seconds(t1, t2);
    entry.predict_seconds = seconds(t0, t1) + seconds(t2, t3);  // encoding counts as serving
    entry.epochs = predictor.epochs();

    cell_times.push_back(entry.fit_seconds + entry.predict_seconds);
    result.entries.push_back(std::move(entry));
    result.records.insert(result.records.end(), cell_records.begin(), cell_records.end());
  }

  result.median_seconds = median(cell_times);
  return result;
}

}  // namespace livekt
