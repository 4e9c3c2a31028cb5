#pragma once

#include <cstdint>
#include <vector>

#include "livekt/predictor.hpp"

namespace livekt {

struct GBDTParams {
  int n_trees = 100;
  int max_depth = 6;
  double learning_rate = 0.1;
  int min_samples_leaf = 20;
  double lambda_l2 = 1.0;
  int max_bins = 255;
  std::uint64_t seed = 0;
};

// Per-feature categorical binning fit on train data: the max_bins-1 most
// frequent codes get dedicated bins, everything else shares one overflow
// bin, PAD is always bin 0. Unseen test codes land in the overflow bin.
struct BinMaps {
  std::vector<std::vector<std::uint8_t>> code_to_bin;  // [feature][code], sized max train code + 1
  std::vector<std::uint16_t> n_bins;                   // per feature, includes PAD + overflow
  std::vector<std::uint8_t> overflow_bin;              // per feature

  std::uint8_t bin_of(std::int32_t feature, std::int32_t code) const {
    const auto& map = code_to_bin[static_cast<std::size_t>(feature)];
    if (code < 0 || static_cast<std::size_t>(code) >= map.size()) {
      return overflow_bin[static_cast<std::size_t>(feature)];
    }
    return map[static_cast<std::size_t>(code)];
  }
};

BinMaps bin_features(const EncodedTable& train, int max_bins);

struct BinnedMatrix {
  std::int32_t n_rows = 0;
  std::int32_t n_features = 0;
  std::vector<std::uint8_t> bins;  // row-major

  std::uint8_t at(std::int32_t row, std::int32_t feature) const {
    return bins[static_cast<std::size_t>(row) * static_cast<std::size_t>(n_features) +
                static_cast<std::size_t>(feature)];
  }
};

BinnedMatrix apply_bins(const BinMaps& maps, const EncodedTable& table);

struct BinStats {
  double g = 0.0;
  double h = 0.0;
  std::int64_t count = 0;
};

struct SplitCandidate {
  bool found = false;
  std::int32_t feature = -1;
  std::vector<std::uint8_t> left_bins;  // flag per bin of the split feature
  double gain = 0.0;
};

// Second-order gain over categorical bins: bins ordered by g/h ratio, prefix
// partitions scanned. Ties resolved toward the lowest feature index, then the
// smallest left subset. Returns found=false when no positive-gain split
// satisfies min_samples_leaf on both sides.
SplitCandidate best_split(const std::vector<std::vector<BinStats>>& node_hist, double lambda_l2,
                          int min_samples_leaf);

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  std::vector<std::uint8_t> left_bins;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;  // additive logit, leaf only
};

struct Tree {
  std::vector<TreeNode> nodes;
};

struct Ensemble {
  double base_score = 0.0;  // train-label log-odds
  std::vector<Tree> trees;
  BinMaps bins;
  GBDTParams params;
};

Ensemble gbdt_fit(const EncodedTable& train, const GBDTParams& params);
std::vector<double> gbdt_predict(const Ensemble& ensemble, const EncodedTable& test);

class GBDTPredictor final : public Predictor {
 public:
  explicit GBDTPredictor(GBDTParams params = {}) : params_(params) {}

  std::string name() const override { return "gbdt"; }
  bool is_in_context() const override { return false; }
  void prepare(const EncodedTable& train) override { ensemble_ = gbdt_fit(train, params_); }
  std::vector<double> predict(const EncodedTable& /*train*/, const EncodedTable& test) override {
    return gbdt_predict(ensemble_, test);
  }
  void reseed(std::uint64_t seed) override { params_.seed = seed; }

  const Ensemble& ensemble() const { return ensemble_; }

 private:
  GBDTParams params_;
  Ensemble ensemble_;
};

}  // namespace livekt
