#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "livekt/predictor.hpp"

namespace livekt {

// Laplace-smoothed correct rate of train rows keyed by the last-question
// code; global smoothed rate for unseen questions.
class MajorityPredictor final : public Predictor {
 public:
  std::string name() const override { return "majority"; }
  bool is_in_context() const override { return false; }
  void prepare(const EncodedTable& train) override;
  std::vector<double> predict(const EncodedTable& train, const EncodedTable& test) override;

 private:
  std::unordered_map<std::int32_t, std::pair<std::int64_t, std::int64_t>> by_question_;  // (correct, count)
  std::int64_t global_correct_ = 0;
  std::int64_t global_count_ = 0;
};

// One hash slot per non-PAD cell; the slot is a pure function of
// (column index, category code, seed). dim must be a power of two.
std::vector<std::uint32_t> featurize(const EncodedRow& row, std::int32_t T, std::uint32_t dim,
                                     std::uint64_t seed);

struct LRParams {
  double learning_rate = 0.1;  // decayed as lr / sqrt(t)
  int epochs = 3;
  double l2 = 1e-6;
  std::uint32_t dim = 1u << 18;
  std::uint64_t seed = 0;
  bool warm_start = false;  // keep weights across prepare() calls (online across T)
};

struct LRWeights {
  std::vector<float> v;    // w = scale * v, kept factored so full-vector L2
  double scale = 1.0;      // decay is O(1) per step
  double bias = 0.0;
  std::uint64_t step = 0;   // global SGD step count, drives the lr decay
  std::uint64_t epoch = 0;  // epochs consumed so far, drives shuffle order

  std::vector<float> materialize() const;  // plain w for serialization
};

// Streaming SGD on hashed features, seeded-shuffled row order per epoch.
// Continuation-safe: fitting 1 epoch twice equals fitting 2 epochs once.
void lr_fit(LRWeights& weights, const EncodedTable& train, const LRParams& params);

std::vector<double> lr_predict(const LRWeights& weights, const EncodedTable& test,
                               const LRParams& params);

class LRPredictor final : public Predictor {
 public:
  explicit LRPredictor(LRParams params = {}) : params_(params) {}

  std::string name() const override { return "lr"; }
  bool is_in_context() const override { return false; }
  void prepare(const EncodedTable& train) override;
  std::vector<double> predict(const EncodedTable& train, const EncodedTable& test) override;
  int epochs() const override { return params_.epochs; }
  void reseed(std::uint64_t seed) override;

  const LRWeights& weights() const { return weights_; }

 private:
  LRParams params_;
  LRWeights weights_;
  bool fitted_ = false;
};

double stable_sigmoid(double z);

}  // namespace livekt
