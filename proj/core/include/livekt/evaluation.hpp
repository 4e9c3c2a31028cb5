#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "livekt/data_model.hpp"
#include "livekt/predictor.hpp"

namespace livekt {

struct LiveSchedule {
  std::vector<std::int32_t> horizons{5, 10, 15, 20};

  void validate() const;  // strictly increasing, all >= 2
};

struct PredictionRecord {
  std::int32_t student_idx = 0;
  std::int32_t T = 0;
  double score = 0.5;  // p(label = 1), finite, in [0,1]
  std::int8_t truth = 0;
};

struct EvalEntry {
  std::string dataset;
  std::string model;
  std::int32_t T = 0;
  std::optional<double> auc;  // unavailable when the test side is single-class
  double accuracy = 0.0;
  double logloss = 0.0;
  std::int32_t n_test_rows = 0;
  double fit_seconds = 0.0;      // prepare() wall time
  double predict_seconds = 0.0;  // encoding + predict() wall time
  int epochs = 1;
};

struct EvalResult {
  std::vector<EvalEntry> entries;           // one per T, schedule order
  std::vector<PredictionRecord> records;    // all emitted predictions
  double median_seconds = 0.0;              // median over T of fit+predict
};

// Mann-Whitney rank AUC with average-rank tie handling. Throws when labels
// are single-class.
double auc(const std::vector<double>& scores, const std::vector<std::int8_t>& labels);

struct Metrics {
  std::optional<double> auc;
  double accuracy = 0.0;
  double logloss = 0.0;
};

// Accuracy thresholds at 0.5 with ties predicting 1; logloss clamps scores
// to [1e-7, 1-1e-7].
Metrics compute_metrics(const std::vector<PredictionRecord>& records);

// The liveKT protocol: for each horizon T, train students are visible up to
// T and test students up to T-1, with the T-th test outcome held out.
EvalResult run_live_eval(Predictor& predictor, const Dataset& dataset, const Split& split,
                         const LiveSchedule& schedule, std::uint64_t seed,
                         const std::string& dataset_name = "dataset");

double median(std::vector<double> values);

}  // namespace livekt
