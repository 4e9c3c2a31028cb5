#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "livekt/predictor.hpp"

namespace livekt {

struct MiniPFNConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_blocks = 3;
  int d_ff = 128;
  int max_features = 64;   // table width + label column must fit
  int max_offsets = 16;    // recency buckets per column family; older cells share the last one
  std::uint64_t value_hash_seed = 0x11a5ULL;
  double dropout = 0.0;    // training only; inference always runs dropout-free

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
};

// All tensors are (rows x cols) with vectors as single-column matrices, so
// one visitor drives init, Adam state, serialization and the grad check.
template <typename S>
struct MiniPFNWeightsT {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  MiniPFNConfig config;

  Mat value_mix;  // d x d, applied to hashed cell value vectors
  Mat pos_emb;    // d x (4 * max_offsets), column = family * max_offsets + recency
  Mat pad_emb;    // d x 1
  Mat mask_emb;   // d x 1, unknown test label
  Mat label_emb;  // d x 2, train-row label classes {0,1}
  Mat head_w;     // 2 x d
  Mat head_b;     // 2 x 1

  struct Block {
    Mat fa_wq, fa_wk, fa_wv, fa_wo;  // d x d, attention across cells of a row
    Mat ra_wq, ra_wk, ra_wv, ra_wo;  // d x d, attention across rows per column
    Mat ln1_g, ln1_b, ln2_g, ln2_b;  // d x 1
    Mat ff_w1;                       // d_ff x d
    Mat ff_b1;                       // d_ff x 1
    Mat ff_w2;                       // d x d_ff
    Mat ff_b2;                       // d x 1
  };
  std::vector<Block> blocks;
};

using MiniPFNWeights = MiniPFNWeightsT<float>;

template <typename S>
MiniPFNWeightsT<S> init_weights(const MiniPFNConfig& config, std::uint64_t seed);

// Fixed pseudo-random unit vector for a (column family, category code) pair.
// Families: 0 = question, 1 = skill, 2 = correctness, 3 = label column.
Eigen::VectorXf hash_value_vector(std::uint64_t seed, int family, std::int32_t code, int dim);

// Row-attention weights over train rows at the label column, one distribution
// per test row, averaged over heads and blocks.
struct AttentionRecord {
  std::vector<std::vector<double>> weights;  // [test_row][train_row]
};

std::vector<double> predict_in_context(const MiniPFNWeights& weights, const EncodedTable& train,
                                       const EncodedTable& test,
                                       AttentionRecord* attention = nullptr);

struct Influence {
  std::int32_t train_row = 0;
  double weight = 0.0;
};

// Top-k train rows by attention weight, ties toward the lower row index.
std::vector<Influence> explain(const AttentionRecord& record, std::size_t test_row, std::size_t k);

class MiniPFNPredictor final : public Predictor {
 public:
  explicit MiniPFNPredictor(MiniPFNWeights weights) : weights_(std::move(weights)) {}

  std::string name() const override { return "minipfn"; }
  bool is_in_context() const override { return true; }
  void prepare(const EncodedTable& /*train*/) override {}  // in-context: nothing to fit
  std::vector<double> predict(const EncodedTable& train, const EncodedTable& test) override {
    return predict_in_context(weights_, train, test);
  }

  const MiniPFNWeights& weights() const { return weights_; }

 private:
  MiniPFNWeights weights_;
};

}  // namespace livekt
