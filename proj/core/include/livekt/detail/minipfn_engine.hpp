#pragma once

// Two-way attention engine shared by inference (float) and pretraining /
// gradient checking (float or double). Cell states live in one matrix of
// shape (d_model, n_cells) with cell index = row * n_columns + column, so
// per-cell operations are column operations and projections are single GEMMs.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "livekt/error.hpp"
#include "livekt/minipfn.hpp"
#include "livekt/rng.hpp"
#include "livekt/threads.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace livekt::detail {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline constexpr double kLnEps = 1e-5;

// ---- parameter traversal (fixed order: init, Adam, serialization, FD) ----

template <typename W, typename Fn>
void for_each_tensor(W& w, Fn&& fn) {
  fn("value_mix", w.value_mix);
  fn("pos_emb", w.pos_emb);
  fn("pad_emb", w.pad_emb);
  fn("mask_emb", w.mask_emb);
  fn("label_emb", w.label_emb);
  fn("head_w", w.head_w);
  fn("head_b", w.head_b);
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    auto& blk = w.blocks[b];
    const std::string p = "block" + std::to_string(b) + ".";
    fn(p + "fa_wq", blk.fa_wq);
    fn(p + "fa_wk", blk.fa_wk);
    fn(p + "fa_wv", blk.fa_wv);
    fn(p + "fa_wo", blk.fa_wo);
    fn(p + "ra_wq", blk.ra_wq);
    fn(p + "ra_wk", blk.ra_wk);
    fn(p + "ra_wv", blk.ra_wv);
    fn(p + "ra_wo", blk.ra_wo);
    fn(p + "ln1_g", blk.ln1_g);
    fn(p + "ln1_b", blk.ln1_b);
    fn(p + "ln2_g", blk.ln2_g);
    fn(p + "ln2_b", blk.ln2_b);
    fn(p + "ff_w1", blk.ff_w1);
    fn(p + "ff_b1", blk.ff_b1);
    fn(p + "ff_w2", blk.ff_w2);
    fn(p + "ff_b2", blk.ff_b2);
  }
}

// ---- column geometry ----

inline int family_of(int col, int T) {
  if (col < T) return 0;
  if (col < 2 * T) return 1;
  if (col < 3 * T - 1) return 2;
  return 3;  // label column
}

// Distance from the last (most recent) position; right alignment makes this
// the coordinate that transfers across horizons.
inline int offset_of(int col, int T) {
  if (col < T) return T - 1 - col;
  if (col < 2 * T) return T - 1 - (col - T);
  if (col < 3 * T - 1) return T - 1 - (col - 2 * T);
  return 0;
}

inline int pos_index(const MiniPFNConfig& cfg, int col, int T) {
  const int off = std::min(offset_of(col, T), cfg.max_offsets - 1);
  return family_of(col, T) * cfg.max_offsets + off;
}

// ---- hashed value vectors ----

inline Eigen::VectorXd hash_value_vector_d(std::uint64_t seed, int family, std::int32_t code,
                                           int dim) {
  Rng rng(hash_combine(hash_combine(seed, static_cast<std::uint64_t>(family)),
                       static_cast<std::uint64_t>(code)));
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

// Cache of value_mix * hash_vector per (family, code), built per forward call.
template <typename S>
class MixedValueCache {
 public:
  MixedValueCache(const MiniPFNWeightsT<S>& w) : w_(w) {}

  const VecX<S>& mixed(int family, std::int32_t code) {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(family) << 32) | static_cast<std::uint32_t>(code);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      const Eigen::VectorXd hv =
          hash_value_vector_d(w_.config.value_hash_seed, family, code, w_.config.d_model);
      VecX<S> mixed = w_.value_mix * hv.cast<S>();
      it = cache_.emplace(key, std::move(mixed)).first;
    }
    return it->second;
  }

  const VecX<S>& raw(int family, std::int32_t code) {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(family) << 32) | static_cast<std::uint32_t>(code);
    auto it = raw_.find(key);
    if (it == raw_.end()) {
      const Eigen::VectorXd hv =
          hash_value_vector_d(w_.config.value_hash_seed, family, code, w_.config.d_model);
      it = raw_.emplace(key, hv.cast<S>()).first;
    }
    return it->second;
  }

 private:
  const MiniPFNWeightsT<S>& w_;
  std::unordered_map<std::uint64_t, VecX<S>> cache_;
  std::unordered_map<std::uint64_t, VecX<S>> raw_;
};

// ---- embedding ----

inline void check_width(const MiniPFNConfig& cfg, const EncodedTable& table) {
  if (3 * table.T > cfg.max_features) {
    throw RuntimeError("table width " + std::to_string(table.width()) +
                       " + label column exceeds max_features " + std::to_string(cfg.max_features));
  }
}

// States for one table; label column carries class embeddings when labels are
// exposed (train rows) and the mask token otherwise (test rows).
template <typename S>
MatX<S> embed_table(const MiniPFNWeightsT<S>& w, const EncodedTable& table, bool expose_labels,
                    MixedValueCache<S>& values) {
  check_width(w.config, table);
  const int T = table.T;
  const int C = 3 * T;  // features + label column
  const int d = w.config.d_model;
  const auto n = static_cast<int>(table.rows.size());

  MatX<S> x(d, static_cast<Eigen::Index>(n) * C);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < C; ++c) {
      const Eigen::Index j = static_cast<Eigen::Index>(r) * C + c;
      auto col = x.col(j);
      if (c == C - 1) {
        if (expose_labels) {
          col = w.label_emb.col(table.rows[static_cast<std::size_t>(r)].label);
        } else {
          col = w.mask_emb.col(0);
        }
      } else {
        const std::int32_t code = table.cell(r, c);
        if (code == kPad) {
          col = w.pad_emb.col(0);
        } else {
          col = values.mixed(family_of(c, T), code);
        }
      }
      col += w.pos_emb.col(pos_index(w.config, c, T));
    }
  }
  return x;
}

// ---- initialization ----

template <typename S>
MiniPFNWeightsT<S> init_weights_t(const MiniPFNConfig& config, std::uint64_t seed) {
  config.validate();
  MiniPFNWeightsT<S> w;
  w.config = config;
  const int d = config.d_model;

  w.value_mix.resize(d, d);
  w.pos_emb.resize(d, 4 * config.max_offsets);
  w.pad_emb.resize(d, 1);
  w.mask_emb.resize(d, 1);
  w.label_emb.resize(d, 2);
  w.head_w.resize(2, d);
  w.head_b.resize(2, 1);
  w.blocks.resize(static_cast<std::size_t>(config.n_blocks));
  for (auto& blk : w.blocks) {
    blk.fa_wq.resize(d, d);
    blk.fa_wk.resize(d, d);
    blk.fa_wv.resize(d, d);
    blk.fa_wo.resize(d, d);
    blk.ra_wq.resize(d, d);
    blk.ra_wk.resize(d, d);
    blk.ra_wv.resize(d, d);
    blk.ra_wo.resize(d, d);
    blk.ln1_g.resize(d, 1);
    blk.ln1_b.resize(d, 1);
    blk.ln2_g.resize(d, 1);
    blk.ln2_b.resize(d, 1);
    blk.ff_w1.resize(config.d_ff, d);
    blk.ff_b1.resize(config.d_ff, 1);
    blk.ff_w2.resize(d, config.d_ff);
    blk.ff_b2.resize(d, 1);
  }

  Rng rng(hash_combine(seed, 0x313374ULL));
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sff = 1.0 / std::sqrt(static_cast<double>(config.d_ff));
  const auto fill = [&rng](auto& m, double sigma) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        m(r, c) = static_cast<S>(rng.normal(0.0, sigma));
      }
    }
  };

  fill(w.value_mix, sd);
  fill(w.pos_emb, sd);
  fill(w.pad_emb, sd);
  fill(w.mask_emb, sd);
  fill(w.label_emb, sd);
  w.head_w.setZero();  // symmetric start: every prediction is 0.5
  w.head_b.setZero();
  for (auto& blk : w.blocks) {
    fill(blk.fa_wq, sd);
    fill(blk.fa_wk, sd);
    fill(blk.fa_wv, sd);
    fill(blk.fa_wo, sd);
    fill(blk.ra_wq, sd);
    fill(blk.ra_wk, sd);
    fill(blk.ra_wv, sd);
    fill(blk.ra_wo, sd);
    blk.ln1_g.setOnes();
    blk.ln1_b.setZero();
    blk.ln2_g.setOnes();
    blk.ln2_b.setZero();
    fill(blk.ff_w1, sd);
    blk.ff_b1.setZero();
    fill(blk.ff_w2, sff);
    blk.ff_b2.setZero();
  }
  return w;
}

// ---- forward with caches (training / gradient checking) ----

template <typename S>
struct BlockCache {
  MatX<S> x0, x1, x2, x3, x4, x5;
  MatX<S> qf, kf, vf, af, fa_out;
  std::vector<MatX<S>> pf;  // [row * H + h], C x C
  MatX<S> qr, kr, vr, ar, ra_out;
  std::vector<MatX<S>> pr;  // [col * H + h], R x N
  MatX<S> u, gu, ff_out;
  Eigen::Array<S, 1, Eigen::Dynamic> mu1, iv1, mu2, iv2;
  MatX<S> xhat1, xhat2;
  MatX<S> drop_fa, drop_ra, drop_ff;  // empty when dropout == 0
};

template <typename S>
struct ForwardCache {
  int C = 0;        // columns incl. label
  int n_train = 0;  // rows carrying visible labels (attention keys)
  int n_test = 0;
  MatX<S> x_embed;
  std::vector<BlockCache<S>> blocks;
  MatX<S> head_in;  // d x n_test, label-column states of test rows
  MatX<S> logits;   // 2 x n_test
  MatX<S> probs;    // 2 x n_test
};

template <typename S>
void softmax_rows_inplace(MatX<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
  }
}

template <typename S>
void layer_norm_forward(const MatX<S>& g, const MatX<S>& b, const MatX<S>& x, MatX<S>& xhat,
                        Eigen::Array<S, 1, Eigen::Dynamic>& mu,
                        Eigen::Array<S, 1, Eigen::Dynamic>& iv, MatX<S>& y) {
  const auto d = static_cast<S>(x.rows());
  mu = x.colwise().mean().array();
  MatX<S> centered = x.rowwise() - mu.matrix();
  iv = (centered.array().square().colwise().sum() / d + static_cast<S>(kLnEps)).rsqrt();
  xhat = (centered.array().rowwise() * iv).matrix();
  y = ((xhat.array().colwise() * g.col(0).array()).colwise() + b.col(0).array()).matrix();
}

// tanh-form GELU: identical in the float forward, the double grad check and
// the vectorized inference path.
inline constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluC1 = 0.044715;

template <typename S>
S gelu_scalar(S x) {
  const S u = static_cast<S>(kGeluC0) * (x + static_cast<S>(kGeluC1) * x * x * x);
  return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::tanh(u));
}

template <typename S>
S gelu_grad_scalar(S x) {
  const S u = static_cast<S>(kGeluC0) * (x + static_cast<S>(kGeluC1) * x * x * x);
  const S t = std::tanh(u);
  const S du = static_cast<S>(kGeluC0) * (static_cast<S>(1) + static_cast<S>(3.0 * kGeluC1) * x * x);
  return static_cast<S>(0.5) * (static_cast<S>(1) + t) +
         static_cast<S>(0.5) * x * (static_cast<S>(1) - t * t) * du;
}

template <typename S>
MatX<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  MatX<S> m(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      m(r, c) = rng.uniform() < p ? S(0) : keep;
    }
  }
  return m;
}

// Feature attention inside each row; row attention across rows per column
// with keys restricted to the first n_train rows.
template <typename S>
void forward_cached(const MiniPFNWeightsT<S>& w, const EncodedTable& train,
                    const EncodedTable& test, ForwardCache<S>& cache,
                    double dropout = 0.0, std::uint64_t dropout_seed = 0) {
  if (train.T != test.T) throw RuntimeError("train/test table width mismatch");
  const MiniPFNConfig& cfg = w.config;
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const int C = 3 * train.T;
  const int N = train.n_rows();
  const int R = N + test.n_rows();
  const auto M = static_cast<Eigen::Index>(R) * C;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  cache.C = C;
  cache.n_train = N;
  cache.n_test = test.n_rows();

  MixedValueCache<S> values(w);
  MatX<S> x(d, M);
  {
    MatX<S> xt = embed_table(w, train, true, values);
    MatX<S> xq = embed_table(w, test, false, values);
    x << xt, xq;
  }
  cache.x_embed = x;

  Rng drop_rng(hash_combine(dropout_seed, 0xd201ULL));

  const auto n_blocks = static_cast<int>(w.blocks.size());
  cache.blocks.assign(static_cast<std::size_t>(n_blocks), BlockCache<S>{});
  for (int b = 0; b < n_blocks; ++b) {
    BlockCache<S>& bc = cache.blocks[static_cast<std::size_t>(b)];
    const auto& blk = w.blocks[static_cast<std::size_t>(b)];
    bc.x0 = x;

    // feature attention
    bc.qf.noalias() = blk.fa_wq * bc.x0;
    bc.kf.noalias() = blk.fa_wk * bc.x0;
    bc.vf.noalias() = blk.fa_wv * bc.x0;
    bc.af.resize(d, M);
    bc.pf.resize(static_cast<std::size_t>(R) * H);
    for (int r = 0; r < R; ++r) {
      const Eigen::Index base = static_cast<Eigen::Index>(r) * C;
      for (int h = 0; h < H; ++h) {
        const auto qh = bc.qf.block(h * dh, base, dh, C);
        const auto kh = bc.kf.block(h * dh, base, dh, C);
        const auto vh = bc.vf.block(h * dh, base, dh, C);
        MatX<S> p = (qh.transpose() * kh) * scale;
        softmax_rows_inplace(p);
        bc.af.block(h * dh, base, dh, C).noalias() = vh * p.transpose();
        bc.pf[static_cast<std::size_t>(r) * H + h] = std::move(p);
      }
    }
    bc.fa_out.noalias() = blk.fa_wo * bc.af;
    if (dropout > 0.0) {
      bc.drop_fa = dropout_mask<S>(d, M, dropout, drop_rng);
      bc.fa_out.array() *= bc.drop_fa.array();
    }
    bc.x1 = bc.x0 + bc.fa_out;

    // row attention (keys/values: train rows only)
    bc.qr.noalias() = blk.ra_wq * bc.x1;
    bc.kr.noalias() = blk.ra_wk * bc.x1;
    bc.vr.noalias() = blk.ra_wv * bc.x1;
    bc.ar.resize(d, M);
    bc.pr.resize(static_cast<std::size_t>(C) * H);
    MatX<S> qc(d, R), kc(d, N), vc(d, N);
    for (int c = 0; c < C; ++c) {
      for (int r = 0; r < R; ++r) qc.col(r) = bc.qr.col(static_cast<Eigen::Index>(r) * C + c);
      for (int r = 0; r < N; ++r) {
        kc.col(r) = bc.kr.col(static_cast<Eigen::Index>(r) * C + c);
        vc.col(r) = bc.vr.col(static_cast<Eigen::Index>(r) * C + c);
      }
      for (int h = 0; h < H; ++h) {
        const auto qh = qc.middleRows(h * dh, dh);
        const auto kh = kc.middleRows(h * dh, dh);
        const auto vh = vc.middleRows(h * dh, dh);
        MatX<S> p = (qh.transpose() * kh) * scale;  // R x N
        softmax_rows_inplace(p);
        MatX<S> ah = vh * p.transpose();  // dh x R
        for (int r = 0; r < R; ++r) {
          bc.ar.col(static_cast<Eigen::Index>(r) * C + c).segment(h * dh, dh) = ah.col(r);
        }
        bc.pr[static_cast<std::size_t>(c) * H + h] = std::move(p);
      }
    }
    bc.ra_out.noalias() = blk.ra_wo * bc.ar;
    if (dropout > 0.0) {
      bc.drop_ra = dropout_mask<S>(d, M, dropout, drop_rng);
      bc.ra_out.array() *= bc.drop_ra.array();
    }
    bc.x2 = bc.x1 + bc.ra_out;

    layer_norm_forward(blk.ln1_g, blk.ln1_b, bc.x2, bc.xhat1, bc.mu1, bc.iv1, bc.x3);

    bc.u.noalias() = blk.ff_w1 * bc.x3;
    bc.u.colwise() += blk.ff_b1.col(0);
    bc.gu = bc.u.unaryExpr([](S v) { return gelu_scalar(v); });
    bc.ff_out.noalias() = blk.ff_w2 * bc.gu;
    bc.ff_out.colwise() += blk.ff_b2.col(0);
    if (dropout > 0.0) {
      bc.drop_ff = dropout_mask<S>(d, M, dropout, drop_rng);
      bc.ff_out.array() *= bc.drop_ff.array();
    }
    bc.x4 = bc.x3 + bc.ff_out;

    layer_norm_forward(blk.ln2_g, blk.ln2_b, bc.x4, bc.xhat2, bc.mu2, bc.iv2, bc.x5);

    if (!bc.x5.allFinite()) {
      throw RuntimeError("forward: non-finite activation in block " + std::to_string(b));
    }
    x = bc.x5;
  }

  // head reads the label column of test rows
  cache.head_in.resize(d, cache.n_test);
  for (int i = 0; i < cache.n_test; ++i) {
    cache.head_in.col(i) = x.col(static_cast<Eigen::Index>(N + i) * C + (C - 1));
  }
  cache.logits.noalias() = w.head_w * cache.head_in;
  cache.logits.colwise() += w.head_b.col(0);
  cache.probs = cache.logits;
  for (Eigen::Index i = 0; i < cache.probs.cols(); ++i) {
    auto col = cache.probs.col(i);
    const S mx = col.maxCoeff();
    col = (col.array() - mx).exp().matrix();
    col /= col.sum();
  }
}

// Mean cross-entropy of query-row predictions; 64-bit accumulation.
template <typename S>
double loss_from_cache(const ForwardCache<S>& cache, const EncodedTable& test) {
  double total = 0.0;
  for (int i = 0; i < cache.n_test; ++i) {
    const int y = test.rows[static_cast<std::size_t>(i)].label;
    const double p = std::max(static_cast<double>(cache.probs(y, i)), 1e-30);
    total -= std::log(p);
  }
  return total / std::max(cache.n_test, 1);
}

template <typename S>
void layer_norm_backward(const MatX<S>& g, const MatX<S>& xhat,
                         const Eigen::Array<S, 1, Eigen::Dynamic>& iv, const MatX<S>& dy,
                         MatX<S>& dg, MatX<S>& db, MatX<S>& dx) {
  const auto d = static_cast<S>(xhat.rows());
  dg.col(0).array() += (dy.array() * xhat.array()).rowwise().sum();
  db.col(0).array() += dy.array().rowwise().sum();
  MatX<S> t = (dy.array().colwise() * g.col(0).array()).matrix();
  Eigen::Array<S, 1, Eigen::Dynamic> mean_t = t.colwise().sum().array() / d;
  Eigen::Array<S, 1, Eigen::Dynamic> mean_tx = (t.array() * xhat.array()).colwise().sum() / d;
  dx = (((t.array().rowwise() - mean_t) - (xhat.array().rowwise() * mean_tx)).rowwise() * iv)
           .matrix();
}

// Accumulates gradients into `grads` (same shapes as the weights). Returns
// d(loss)/d(embedded states) implicitly through parameter gradients only;
// hash vectors are fixed and receive no gradient.
template <typename S>
void backward(const MiniPFNWeightsT<S>& w, const EncodedTable& train, const EncodedTable& test,
              const ForwardCache<S>& cache, MiniPFNWeightsT<S>& grads) {
  const MiniPFNConfig& cfg = w.config;
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const int C = cache.C;
  const int N = cache.n_train;
  const int R = N + cache.n_test;
  const auto M = static_cast<Eigen::Index>(R) * C;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  // head + cross entropy
  MatX<S> dlogits = cache.probs;  // p - onehot(y), averaged over query rows
  for (int i = 0; i < cache.n_test; ++i) {
    dlogits(test.rows[static_cast<std::size_t>(i)].label, i) -= S(1);
  }
  dlogits /= static_cast<S>(std::max(cache.n_test, 1));

  grads.head_w.noalias() += dlogits * cache.head_in.transpose();
  grads.head_b.col(0) += dlogits.rowwise().sum();

  MatX<S> dx = MatX<S>::Zero(d, M);
  {
    MatX<S> dhead_in = w.head_w.transpose() * dlogits;  // d x n_test
    for (int i = 0; i < cache.n_test; ++i) {
      dx.col(static_cast<Eigen::Index>(N + i) * C + (C - 1)) += dhead_in.col(i);
    }
  }

  for (int b = static_cast<int>(w.blocks.size()) - 1; b >= 0; --b) {
    const BlockCache<S>& bc = cache.blocks[static_cast<std::size_t>(b)];
    const auto& blk = w.blocks[static_cast<std::size_t>(b)];
    auto& gblk = grads.blocks[static_cast<std::size_t>(b)];

    // LN2
    MatX<S> dx4;
    layer_norm_backward(blk.ln2_g, bc.xhat2, bc.iv2, dx, gblk.ln2_g, gblk.ln2_b, dx4);

    // FF (x4 = x3 + drop(ff_out))
    MatX<S> dff = dx4;
    if (bc.drop_ff.size() > 0) dff.array() *= bc.drop_ff.array();
    gblk.ff_w2.noalias() += dff * bc.gu.transpose();
    gblk.ff_b2.col(0) += dff.rowwise().sum();
    MatX<S> dgu = blk.ff_w2.transpose() * dff;
    MatX<S> du =
        (dgu.array() * bc.u.unaryExpr([](S v) { return gelu_grad_scalar(v); }).array()).matrix();
    gblk.ff_w1.noalias() += du * bc.x3.transpose();
    gblk.ff_b1.col(0) += du.rowwise().sum();
    MatX<S> dx3 = dx4;
    dx3.noalias() += blk.ff_w1.transpose() * du;

    // LN1
    MatX<S> dx2;
    layer_norm_backward(blk.ln1_g, bc.xhat1, bc.iv1, dx3, gblk.ln1_g, gblk.ln1_b, dx2);

    // row attention (x2 = x1 + drop(ra_out))
    MatX<S> dra = dx2;
    if (bc.drop_ra.size() > 0) dra.array() *= bc.drop_ra.array();
    gblk.ra_wo.noalias() += dra * bc.ar.transpose();
    MatX<S> dar = blk.ra_wo.transpose() * dra;

    MatX<S> dqr = MatX<S>::Zero(d, M);
    MatX<S> dkr = MatX<S>::Zero(d, M);
    MatX<S> dvr = MatX<S>::Zero(d, M);
    {
      MatX<S> qc(d, R), kc(d, N), vc(d, N), dac(d, R);
      for (int c = 0; c < C; ++c) {
        for (int r = 0; r < R; ++r) {
          qc.col(r) = bc.qr.col(static_cast<Eigen::Index>(r) * C + c);
          dac.col(r) = dar.col(static_cast<Eigen::Index>(r) * C + c);
        }
        for (int r = 0; r < N; ++r) {
          kc.col(r) = bc.kr.col(static_cast<Eigen::Index>(r) * C + c);
          vc.col(r) = bc.vr.col(static_cast<Eigen::Index>(r) * C + c);
        }
        for (int h = 0; h < H; ++h) {
          const auto& p = bc.pr[static_cast<std::size_t>(c) * H + h];  // R x N
          const auto qh = qc.middleRows(h * dh, dh);
          const auto kh = kc.middleRows(h * dh, dh);
          const auto vh = vc.middleRows(h * dh, dh);
          const auto dah = dac.middleRows(h * dh, dh);  // dh x R

          MatX<S> dp = dah.transpose() * vh;  // R x N
          MatX<S> dvh = dah * p;              // dh x N
          // softmax rows
          for (int r = 0; r < R; ++r) {
            const S dot = dp.row(r).dot(p.row(r));
            dp.row(r) = (p.row(r).array() * (dp.row(r).array() - dot)).matrix();
          }
          MatX<S> dqh = (kh * dp.transpose()) * scale;  // dh x R
          MatX<S> dkh = (qh * dp) * scale;              // dh x N

          for (int r = 0; r < R; ++r) {
            dqr.col(static_cast<Eigen::Index>(r) * C + c).segment(h * dh, dh) += dqh.col(r);
          }
          for (int r = 0; r < N; ++r) {
            dkr.col(static_cast<Eigen::Index>(r) * C + c).segment(h * dh, dh) += dkh.col(r);
            dvr.col(static_cast<Eigen::Index>(r) * C + c).segment(h * dh, dh) += dvh.col(r);
          }
        }
      }
    }
    gblk.ra_wq.noalias() += dqr * bc.x1.transpose();
    gblk.ra_wk.noalias() += dkr * bc.x1.transpose();
    gblk.ra_wv.noalias() += dvr * bc.x1.transpose();
    MatX<S> dx1 = dx2;
    dx1.noalias() += blk.ra_wq.transpose() * dqr;
    dx1.noalias() += blk.ra_wk.transpose() * dkr;
    dx1.noalias() += blk.ra_wv.transpose() * dvr;

    // feature attention (x1 = x0 + drop(fa_out))
    MatX<S> dfa = dx1;
    if (bc.drop_fa.size() > 0) dfa.array() *= bc.drop_fa.array();
    gblk.fa_wo.noalias() += dfa * bc.af.transpose();
    MatX<S> daf = blk.fa_wo.transpose() * dfa;

    MatX<S> dqf = MatX<S>::Zero(d, M);
    MatX<S> dkf = MatX<S>::Zero(d, M);
    MatX<S> dvf = MatX<S>::Zero(d, M);
    for (int r = 0; r < R; ++r) {
      const Eigen::Index base = static_cast<Eigen::Index>(r) * C;
      for (int h = 0; h < H; ++h) {
        const auto& p = bc.pf[static_cast<std::size_t>(r) * H + h];  // C x C
        const auto qh = bc.qf.block(h * dh, base, dh, C);
        const auto kh = bc.kf.block(h * dh, base, dh, C);
        const auto vh = bc.vf.block(h * dh, base, dh, C);
        const auto dah = daf.block(h * dh, base, dh, C);

        MatX<S> dp = dah.transpose() * vh;  // C x C
        dvf.block(h * dh, base, dh, C).noalias() += dah * p;
        for (int i = 0; i < C; ++i) {
          const S dot = dp.row(i).dot(p.row(i));
          dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
        }
        dqf.block(h * dh, base, dh, C).noalias() += (kh * dp.transpose()) * scale;
        dkf.block(h * dh, base, dh, C).noalias() += (qh * dp) * scale;
      }
    }
    gblk.fa_wq.noalias() += dqf * bc.x0.transpose();
    gblk.fa_wk.noalias() += dkf * bc.x0.transpose();
    gblk.fa_wv.noalias() += dvf * bc.x0.transpose();
    MatX<S> dx0 = dx1;
    dx0.noalias() += blk.fa_wq.transpose() * dqf;
    dx0.noalias() += blk.fa_wk.transpose() * dkf;
    dx0.noalias() += blk.fa_wv.transpose() * dvf;

    dx = std::move(dx0);
  }

  // embedding
  MixedValueCache<S> values(w);
  const int T = train.T;
  for (int r = 0; r < R; ++r) {
    const bool is_train = r < N;
    const EncodedTable& table = is_train ? train : test;
    const int local = is_train ? r : r - N;
    const auto& row = table.rows[static_cast<std::size_t>(local)];
    for (int c = 0; c < C; ++c) {
      const auto j = static_cast<Eigen::Index>(r) * C + c;
      const auto dcol = dx.col(j);
      grads.pos_emb.col(pos_index(cfg, c, T)) += dcol;
      if (c == C - 1) {
        if (is_train) {
          grads.label_emb.col(row.label) += dcol;
        } else {
          grads.mask_emb.col(0) += dcol;
        }
      } else {
        const std::int32_t code = table.cell(local, c);
        if (code == kPad) {
          grads.pad_emb.col(0) += dcol;
        } else {
          grads.value_mix.noalias() +=
              dcol * values.raw(family_of(c, T), code).transpose();
        }
      }
    }
  }
}

}  // namespace livekt::detail
