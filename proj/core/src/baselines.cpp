#include "livekt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "livekt/error.hpp"
#include "livekt/rng.hpp"

namespace livekt {

double stable_sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void MajorityPredictor::prepare(const EncodedTable& train) {
  by_question_.clear();
  global_correct_ = 0;
  global_count_ = 0;
  const std::int32_t last = train.T - 1;
  for (const auto& row : train.rows) {
    auto& [c, n] = by_question_[row.questions[static_cast<std::size_t>(last)]];
    c += row.label;
    n += 1;
    global_correct_ += row.label;
    global_count_ += 1;
  }
}

std::vector<double> MajorityPredictor::predict(const EncodedTable& train, const EncodedTable& test) {
  if (global_count_ == 0) prepare(train);
  const double global_rate =
      static_cast<double>(global_correct_ + 1) / static_cast<double>(global_count_ + 2);
  const std::int32_t last = test.T - 1;
  std::vector<double> out;
  out.reserve(test.rows.size());
  for (const auto& row : test.rows) {
    const auto it = by_question_.find(row.questions[static_cast<std::size_t>(last)]);
    if (it == by_question_.end()) {
      out.push_back(global_rate);
    } else {
      const auto [c, n] = it->second;
      out.push_back(static_cast<double>(c + 1) / static_cast<double>(n + 2));
    }
  }
  return out;
}

std::vector<std::uint32_t> featurize(const EncodedRow& row, std::int32_t T, std::uint32_t dim,
                                     std::uint64_t seed) {
  if (dim == 0 || (dim & (dim - 1)) != 0) throw UsageError("hash dim must be a power of two");
  const std::uint32_t mask = dim - 1;
  std::vector<std::uint32_t> slots;
  slots.reserve(static_cast<std::size_t>(3 * T - 1));
  const auto emit = [&](std::int32_t col, std::int32_t code) {
    if (code == kPad) return;
    const std::uint64_t h = hash_combine(hash_combine(seed, static_cast<std::uint64_t>(col)),
                                         static_cast<std::uint64_t>(code));
    slots.push_back(static_cast<std::uint32_t>(h) & mask);
  };
  for (std::int32_t t = 0; t < T; ++t) emit(t, row.questions[static_cast<std::size_t>(t)]);
  for (std::int32_t t = 0; t < T; ++t) emit(T + t, row.skills[static_cast<std::size_t>(t)]);
  for (std::int32_t t = 0; t + 1 < T; ++t) emit(2 * T + t, row.past_correct[static_cast<std::size_t>(t)]);
  return slots;
}

std::vector<float> LRWeights::materialize() const {
  std::vector<float> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = static_cast<float>(scale * static_cast<double>(v[i]));
  return w;
}

void lr_fit(LRWeights& weights, const EncodedTable& train, const LRParams& params) {
  if (train.rows.empty()) throw RuntimeError("lr_fit: empty train table");
  if (weights.v.size() != params.dim) {
    weights.v.assign(params.dim, 0.0f);
    weights.scale = 1.0;
    weights.bias = 0.0;
    weights.step = 0;
    weights.epoch = 0;
  }

  std::vector<std::vector<std::uint32_t>> features;
  features.reserve(train.rows.size());
  for (const auto& row : train.rows) features.push_back(featurize(row, train.T, params.dim, params.seed));

  std::vector<std::size_t> order(train.rows.size());
  for (int e = 0; e < params.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(hash_combine(params.seed, 0x5157ULL + weights.epoch));
    rng.shuffle(order);
    ++weights.epoch;

    for (const std::size_t r : order) {
      ++weights.step;
      const double lr = params.learning_rate / std::sqrt(static_cast<double>(weights.step));

      double z = weights.bias;
      double dot = 0.0;
      for (const auto slot : features[r]) dot += static_cast<double>(weights.v[slot]);
      z += weights.scale * dot;
      if (!std::isfinite(z)) {
        throw RuntimeError("lr_fit diverged at step " + std::to_string(weights.step));
      }
      const double g = stable_sigmoid(z) - static_cast<double>(train.rows[r].label);

      // w <- (1 - lr*l2) w - lr*g*x, with w = scale*v kept factored.
      if (params.l2 > 0.0) {
        weights.scale *= 1.0 - lr * params.l2;
        if (weights.scale <= 0.0 || !std::isfinite(weights.scale)) {
          throw RuntimeError("lr_fit weight scale collapsed at step " + std::to_string(weights.step));
        }
      }
      const double delta = -lr * g / weights.scale;
      for (const auto slot : features[r]) {
        weights.v[slot] = static_cast<float>(static_cast<double>(weights.v[slot]) + delta);
      }
      weights.bias -= lr * g;
    }
  }
  for (const auto w : weights.v) {
    if (!std::isfinite(w)) throw RuntimeError("lr_fit produced non-finite weights at step " +
                                              std::to_string(weights.step));
  }
}

std::vector<double> lr_predict(const LRWeights& weights, const EncodedTable& test,
                               const LRParams& params) {
  std::vector<double> out;
  out.reserve(test.rows.size());
  for (const auto& row : test.rows) {
    double dot = 0.0;
    if (!weights.v.empty()) {
      for (const auto slot : featurize(row, test.T, params.dim, params.seed)) {
        dot += static_cast<double>(weights.v[slot]);
      }
    }
    // open interval: saturated sigmoids never emit exact 0/1
    out.push_back(std::clamp(stable_sigmoid(weights.scale * dot + weights.bias), 1e-7, 1.0 - 1e-7));
  }
  return out;
}

void LRPredictor::prepare(const EncodedTable& train) {
  if (!params_.warm_start || !fitted_) {
    weights_ = LRWeights{};
  }
  lr_fit(weights_, train, params_);
  fitted_ = true;
}

std::vector<double> LRPredictor::predict(const EncodedTable& /*train*/, const EncodedTable& test) {
  return lr_predict(weights_, test, params_);
}

void LRPredictor::reseed(std::uint64_t seed) {
  params_.seed = seed;
  weights_ = LRWeights{};
  fitted_ = false;
}

}  // namespace livekt
