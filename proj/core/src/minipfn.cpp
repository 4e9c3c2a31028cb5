#include "livekt/minipfn.hpp"

#include <algorithm>
#include <cmath>

#include "livekt/detail/minipfn_engine.hpp"
#include "livekt/error.hpp"
#include "livekt/threads.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace livekt {

void MiniPFNConfig::validate() const {
  if (d_model < 2 || n_heads < 1 || n_blocks < 1 || d_ff < 1) {
    throw UsageError("minipfn config: dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw UsageError("minipfn config: d_model must divide by n_heads");
  if (max_features < 4 || max_offsets < 2) throw UsageError("minipfn config: limits too small");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("minipfn config: dropout must be in [0,1)");
}

template <typename S>
MiniPFNWeightsT<S> init_weights(const MiniPFNConfig& config, std::uint64_t seed) {
  return detail::init_weights_t<S>(config, seed);
}
template MiniPFNWeightsT<float> init_weights<float>(const MiniPFNConfig&, std::uint64_t);
template MiniPFNWeightsT<double> init_weights<double>(const MiniPFNConfig&, std::uint64_t);

Eigen::VectorXf hash_value_vector(std::uint64_t seed, int family, std::int32_t code, int dim) {
  return detail::hash_value_vector_d(seed, family, code, dim).cast<float>();
}

namespace {

using Mat = Eigen::MatrixXf;
using detail::kGeluC0;
using detail::kGeluC1;

// Column-chunked GEMM: each output column is produced by exactly one thread,
// so results are independent of the thread count.
void proj(Mat& out, const Mat& w, const Mat& x, int n_threads) {
  const Eigen::Index m = x.cols();
  out.resize(w.rows(), m);
  const Eigen::Index chunk = std::max<Eigen::Index>(1024, (m + n_threads - 1) / n_threads);
  const auto n_chunks = static_cast<int>((m + chunk - 1) / chunk);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(n_threads)
#endif
  for (int ci = 0; ci < n_chunks; ++ci) {
    const Eigen::Index a = static_cast<Eigen::Index>(ci) * chunk;
    const Eigen::Index len = std::min(chunk, m - a);
    out.middleCols(a, len).noalias() = w * x.middleCols(a, len);
  }
}

void layer_norm_inplace(const Mat& g, const Mat& b, Mat& x) {
  const auto d = static_cast<float>(x.rows());
  Eigen::Array<float, 1, Eigen::Dynamic> mu = x.colwise().mean().array();
  x = (x.rowwise() - mu.matrix()).eval();
  Eigen::Array<float, 1, Eigen::Dynamic> iv =
      (x.array().square().colwise().sum() / d + static_cast<float>(detail::kLnEps)).rsqrt();
  x = (((x.array().rowwise() * iv).colwise() * g.col(0).array()).colwise() + b.col(0).array())
          .matrix();
}

}  // namespace

std::vector<double> predict_in_context(const MiniPFNWeights& w, const EncodedTable& train,
                                       const EncodedTable& test, AttentionRecord* attention) {
  if (test.rows.empty()) {
    if (attention) attention->weights.clear();
    return {};
  }
  if (train.rows.empty()) throw RuntimeError("minipfn: empty train context");
  if (train.T != test.T) throw RuntimeError("minipfn: train/test width mismatch");
  const MiniPFNConfig& cfg = w.config;
  cfg.validate();

  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const int C = 3 * train.T;
  const int N = train.n_rows();
  const int R = N + test.n_rows();
  const auto M = static_cast<Eigen::Index>(R) * C;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const int n_threads = thread_count();

  Mat x(d, M);
  {
    detail::MixedValueCache<float> values(w);
    x << detail::embed_table(w, train, true, values),
        detail::embed_table(w, test, false, values);
  }

  std::vector<std::vector<double>> attn_sum;
  if (attention) {
    attn_sum.assign(static_cast<std::size_t>(test.n_rows()),
                    std::vector<double>(static_cast<std::size_t>(N), 0.0));
  }

  const auto n_blocks = static_cast<int>(w.blocks.size());
  Mat q, k, v, a(d, M), out, u;
  for (int b = 0; b < n_blocks; ++b) {
    const auto& blk = w.blocks[static_cast<std::size_t>(b)];

    // feature attention
    proj(q, blk.fa_wq, x, n_threads);
    proj(k, blk.fa_wk, x, n_threads);
    proj(v, blk.fa_wv, x, n_threads);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(n_threads)
#endif
    for (int r = 0; r < R; ++r) {
      const Eigen::Index base = static_cast<Eigen::Index>(r) * C;
      Mat p(C, C);
      for (int h = 0; h < H; ++h) {
        p.noalias() = (q.block(h * dh, base, dh, C).transpose() * k.block(h * dh, base, dh, C)) *
                      scale;
        detail::softmax_rows_inplace(p);
        a.block(h * dh, base, dh, C).noalias() = v.block(h * dh, base, dh, C) * p.transpose();
      }
    }
    proj(out, blk.fa_wo, a, n_threads);
    x += out;

    // row attention, keys/values restricted to train rows
    proj(q, blk.ra_wq, x, n_threads);
    proj(k, blk.ra_wk, x, n_threads);
    proj(v, blk.ra_wv, x, n_threads);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(n_threads)
#endif
    for (int c = 0; c < C; ++c) {
      Mat qc(d, R), kc(d, N), vc(d, N);
      for (int r = 0; r < R; ++r) qc.col(r) = q.col(static_cast<Eigen::Index>(r) * C + c);
      for (int r = 0; r < N; ++r) {
        kc.col(r) = k.col(static_cast<Eigen::Index>(r) * C + c);
        vc.col(r) = v.col(static_cast<Eigen::Index>(r) * C + c);
      }
      Mat p, ah;
      for (int h = 0; h < H; ++h) {
        p.noalias() = (qc.middleRows(h * dh, dh).transpose() * kc.middleRows(h * dh, dh)) * scale;
        detail::softmax_rows_inplace(p);
        if (attention && c == C - 1) {
          for (int i = 0; i < test.n_rows(); ++i) {
            auto& acc = attn_sum[static_cast<std::size_t>(i)];
            for (int n = 0; n < N; ++n) acc[static_cast<std::size_t>(n)] += p(N + i, n);
          }
        }
        ah.noalias() = vc.middleRows(h * dh, dh) * p.transpose();
        for (int r = 0; r < R; ++r) {
          a.col(static_cast<Eigen::Index>(r) * C + c).segment(h * dh, dh) = ah.col(r);
        }
      }
    }
    proj(out, blk.ra_wo, a, n_threads);
    x += out;

    layer_norm_inplace(blk.ln1_g, blk.ln1_b, x);

    // feed-forward (tanh-form gelu, vectorized)
    proj(u, blk.ff_w1, x, n_threads);
    u.colwise() += blk.ff_b1.col(0);
    u = (0.5f * u.array() *
         (1.0f + ((u.array() + static_cast<float>(kGeluC1) * u.array().cube()) *
                  static_cast<float>(kGeluC0))
                     .tanh()))
            .matrix();
    proj(out, blk.ff_w2, u, n_threads);
    out.colwise() += blk.ff_b2.col(0);
    x += out;

    layer_norm_inplace(blk.ln2_g, blk.ln2_b, x);

    if (!x.allFinite()) {
      throw RuntimeError("forward: non-finite activation in block " + std::to_string(b));
    }
  }

  std::vector<double> probs;
  probs.reserve(static_cast<std::size_t>(test.n_rows()));
  for (int i = 0; i < test.n_rows(); ++i) {
    const Eigen::Vector2f z =
        w.head_w * x.col(static_cast<Eigen::Index>(N + i) * C + (C - 1)) + w.head_b.col(0);
    const float mx = z.maxCoeff();
    const float e0 = std::exp(z[0] - mx);
    const float e1 = std::exp(z[1] - mx);
    probs.push_back(static_cast<double>(e1) / (static_cast<double>(e0) + static_cast<double>(e1)));
  }

  if (attention) {
    const double denom = static_cast<double>(H) * n_blocks;
    attention->weights.resize(attn_sum.size());
    for (std::size_t i = 0; i < attn_sum.size(); ++i) {
      attention->weights[i] = std::move(attn_sum[i]);
      for (auto& wv : attention->weights[i]) wv /= denom;
    }
  }
  return probs;
}

std::vector<Influence> explain(const AttentionRecord& record, std::size_t test_row, std::size_t k) {
  if (k < 1) throw UsageError("explain: k must be >= 1");
  if (test_row >= record.weights.size()) throw UsageError("explain: test row out of range");
  const auto& weights = record.weights[test_row];

  std::vector<Influence> ranked(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    ranked[i].train_row = static_cast<std::int32_t>(i);
    ranked[i].weight = weights[i];
  }
  std::sort(ranked.begin(), ranked.end(), [](const Influence& a, const Influence& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.train_row < b.train_row;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace livekt
