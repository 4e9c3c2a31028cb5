#include "livekt/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "livekt/baselines.hpp"
#include "livekt/error.hpp"
#include "livekt/threads.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace livekt {

BinMaps bin_features(const EncodedTable& train, int max_bins) {
  if (max_bins < 2 || max_bins > 255) throw UsageError("max_bins must be in [2,255]");
  const std::int32_t n_features = train.width();
  BinMaps maps;
  maps.code_to_bin.resize(static_cast<std::size_t>(n_features));
  maps.n_bins.resize(static_cast<std::size_t>(n_features));
  maps.overflow_bin.resize(static_cast<std::size_t>(n_features));

  std::unordered_map<std::int32_t, std::int64_t> freq;
  std::vector<std::pair<std::int64_t, std::int32_t>> ranked;
  for (std::int32_t f = 0; f < n_features; ++f) {
    freq.clear();
    std::int32_t max_code = 0;
    for (std::int32_t r = 0; r < train.n_rows(); ++r) {
      const std::int32_t code = train.cell(r, f);
      max_code = std::max(max_code, code);
      if (code != kPad) ++freq[code];
    }

    ranked.clear();
    ranked.reserve(freq.size());
    for (const auto& [code, count] : freq) ranked.emplace_back(count, code);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;  // most frequent first
      return a.second < b.second;                        // then lowest code
    });
    const auto dedicated = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(max_bins - 1));

    // Dedicated bins numbered by ascending code for a stable layout.
    std::vector<std::int32_t> kept;
    kept.reserve(dedicated);
    for (std::size_t i = 0; i < dedicated; ++i) kept.push_back(ranked[i].second);
    std::sort(kept.begin(), kept.end());

    const auto overflow = static_cast<std::uint8_t>(dedicated + 1);
    auto& map = maps.code_to_bin[static_cast<std::size_t>(f)];
    map.assign(static_cast<std::size_t>(max_code) + 1, overflow);
    map[0] = 0;  // PAD
    for (std::size_t i = 0; i < kept.size(); ++i) {
      map[static_cast<std::size_t>(kept[i])] = static_cast<std::uint8_t>(i + 1);
    }
    maps.overflow_bin[static_cast<std::size_t>(f)] = overflow;
    maps.n_bins[static_cast<std::size_t>(f)] = static_cast<std::uint16_t>(dedicated + 2);
  }
  return maps;
}

BinnedMatrix apply_bins(const BinMaps& maps, const EncodedTable& table) {
  BinnedMatrix m;
  m.n_rows = table.n_rows();
  m.n_features = table.width();
  m.bins.resize(static_cast<std::size_t>(m.n_rows) * static_cast<std::size_t>(m.n_features));
  for (std::int32_t r = 0; r < m.n_rows; ++r) {
    for (std::int32_t f = 0; f < m.n_features; ++f) {
      m.bins[static_cast<std::size_t>(r) * static_cast<std::size_t>(m.n_features) +
             static_cast<std::size_t>(f)] = maps.bin_of(f, table.cell(r, f));
    }
  }
  return m;
}

SplitCandidate best_split(const std::vector<std::vector<BinStats>>& node_hist, double lambda_l2,
                          int min_samples_leaf) {
  SplitCandidate best;

  double total_g = 0.0, total_h = 0.0;
  std::int64_t total_count = 0;
  if (!node_hist.empty()) {
    for (const auto& b : node_hist.front()) {
      total_g += b.g;
      total_h += b.h;
      total_count += b.count;
    }
  }
  if (total_count < 2 * static_cast<std::int64_t>(min_samples_leaf)) return best;

  const double parent_score = total_g * total_g / (total_h + lambda_l2);

  std::vector<std::uint16_t> order;
  for (std::size_t f = 0; f < node_hist.size(); ++f) {
    const auto& hist = node_hist[f];
    order.clear();
    for (std::size_t b = 0; b < hist.size(); ++b) {
      if (hist[b].count > 0) order.push_back(static_cast<std::uint16_t>(b));
    }
    if (order.size() < 2) continue;
    std::sort(order.begin(), order.end(), [&](std::uint16_t a, std::uint16_t b) {
      const double ra = hist[a].g / hist[a].h;
      const double rb = hist[b].g / hist[b].h;
      if (ra != rb) return ra < rb;
      return a < b;
    });

    double gl = 0.0, hl = 0.0;
    std::int64_t cl = 0;
    for (std::size_t cut = 0; cut + 1 < order.size(); ++cut) {
      const auto& b = hist[order[cut]];
      gl += b.g;
      hl += b.h;
      cl += b.count;
      const std::int64_t cr = total_count - cl;
      if (cl < min_samples_leaf) continue;
      if (cr < min_samples_leaf) break;
      const double gr = total_g - gl;
      const double hr = total_h - hl;
      const double gain =
          gl * gl / (hl + lambda_l2) + gr * gr / (hr + lambda_l2) - parent_score;
      if (gain > best.gain && gain > 0.0) {
        best.found = true;
        best.feature = static_cast<std::int32_t>(f);
        best.gain = gain;
        best.left_bins.assign(hist.size(), 0);
        for (std::size_t k = 0; k <= cut; ++k) best.left_bins[order[k]] = 1;
      }
    }
  }
  return best;
}

namespace {

struct NodeWork {
  std::int32_t node_id = -1;
  double g = 0.0;
  double h = 0.0;
};

double clamp_rate(double p) { return std::clamp(p, 1e-6, 1.0 - 1e-6); }

}  // namespace

Ensemble gbdt_fit(const EncodedTable& train, const GBDTParams& params) {
  if (train.rows.empty()) throw RuntimeError("gbdt_fit: empty train table");
  if (params.n_trees < 0 || params.max_depth < 1) throw UsageError("gbdt: bad tree parameters");

  Ensemble ens;
  ens.params = params;
  ens.bins = bin_features(train, params.max_bins);
  const BinnedMatrix binned = apply_bins(ens.bins, train);
  const std::int32_t n_rows = binned.n_rows;
  const std::int32_t n_features = binned.n_features;

  std::int64_t n_pos = 0;
  for (const auto& row : train.rows) n_pos += row.label;
  const double rate = clamp_rate(static_cast<double>(n_pos) / static_cast<double>(n_rows));
  ens.base_score = std::log(rate / (1.0 - rate));
  if (n_pos == 0 || n_pos == n_rows) return ens;  // single-class: base only

  std::vector<double> margin(static_cast<std::size_t>(n_rows), ens.base_score);
  std::vector<double> grad(static_cast<std::size_t>(n_rows));
  std::vector<double> hess(static_cast<std::size_t>(n_rows));
  std::vector<std::int32_t> slot_of(static_cast<std::size_t>(n_rows));

  const int n_threads = thread_count();
  const auto leaf_value = [&](double g, double h) {
    return -g / (h + params.lambda_l2) * params.learning_rate;
  };

  for (int tree_idx = 0; tree_idx < params.n_trees; ++tree_idx) {
    for (std::int32_t r = 0; r < n_rows; ++r) {
      const double p = stable_sigmoid(margin[static_cast<std::size_t>(r)]);
      grad[static_cast<std::size_t>(r)] =
          p - static_cast<double>(train.rows[static_cast<std::size_t>(r)].label);
      hess[static_cast<std::size_t>(r)] = p * (1.0 - p);
    }

    Tree tree;
    tree.nodes.emplace_back();
    std::fill(slot_of.begin(), slot_of.end(), 0);  // all rows in the root (slot 0)

    std::vector<NodeWork> level(1);
    level[0].node_id = 0;
    for (std::int32_t r = 0; r < n_rows; ++r) {
      level[0].g += grad[static_cast<std::size_t>(r)];
      level[0].h += hess[static_cast<std::size_t>(r)];
    }

    for (int depth = 0; depth < params.max_depth && !level.empty(); ++depth) {
      const auto n_active = static_cast<std::int32_t>(level.size());

      // Histograms: [slot][feature][bin]. Feature-parallel accumulation keeps
      // sums in row order, so results are thread-count independent.
      std::vector<std::vector<std::vector<BinStats>>> hist(static_cast<std::size_t>(n_active));
      for (auto& per_feature : hist) {
        per_feature.resize(static_cast<std::size_t>(n_features));
        for (std::int32_t f = 0; f < n_features; ++f) {
          per_feature[static_cast<std::size_t>(f)].assign(
              ens.bins.n_bins[static_cast<std::size_t>(f)], BinStats{});
        }
      }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(n_threads)
#endif
      for (std::int32_t f = 0; f < n_features; ++f) {
        for (std::int32_t r = 0; r < n_rows; ++r) {
          const std::int32_t slot = slot_of[static_cast<std::size_t>(r)];
          if (slot < 0) continue;
          auto& b = hist[static_cast<std::size_t>(slot)][static_cast<std::size_t>(f)][binned.at(r, f)];
          b.g += grad[static_cast<std::size_t>(r)];
          b.h += hess[static_cast<std::size_t>(r)];
          b.count += 1;
        }
      }

      std::vector<NodeWork> next_level;
      std::vector<std::int32_t> slot_to_next(static_cast<std::size_t>(n_active) * 2, -1);
      for (std::int32_t i = 0; i < n_active; ++i) {
        const NodeWork& work = level[static_cast<std::size_t>(i)];
        const SplitCandidate split =
            best_split(hist[static_cast<std::size_t>(i)], params.lambda_l2, params.min_samples_leaf);
        if (!split.found) {
          tree.nodes[static_cast<std::size_t>(work.node_id)].value = leaf_value(work.g, work.h);
          continue;
        }

        NodeWork lw, rw;
        for (std::size_t b = 0; b < split.left_bins.size(); ++b) {
          const auto& stats = hist[static_cast<std::size_t>(i)][static_cast<std::size_t>(split.feature)][b];
          if (split.left_bins[b]) {
            lw.g += stats.g;
            lw.h += stats.h;
          }
        }
        rw.g = work.g - lw.g;
        rw.h = work.h - lw.h;

        const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
        const auto right_id = left_id + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        TreeNode& node = tree.nodes[static_cast<std::size_t>(work.node_id)];
        node.feature = split.feature;
        node.left_bins = split.left_bins;
        node.left = left_id;
        node.right = right_id;

        lw.node_id = left_id;
        rw.node_id = right_id;
        slot_to_next[static_cast<std::size_t>(i) * 2] = static_cast<std::int32_t>(next_level.size());
        next_level.push_back(lw);
        slot_to_next[static_cast<std::size_t>(i) * 2 + 1] = static_cast<std::int32_t>(next_level.size());
        next_level.push_back(rw);
      }

      // Move rows into child slots; rows in freshly made leaves drop out.
      for (std::int32_t r = 0; r < n_rows; ++r) {
        const std::int32_t slot = slot_of[static_cast<std::size_t>(r)];
        if (slot < 0) continue;
        const TreeNode& node =
            tree.nodes[static_cast<std::size_t>(level[static_cast<std::size_t>(slot)].node_id)];
        if (node.feature < 0) {
          slot_of[static_cast<std::size_t>(r)] = -1;
          continue;
        }
        const std::uint8_t bin = binned.at(r, node.feature);
        const bool go_left = node.left_bins[bin] != 0;
        slot_of[static_cast<std::size_t>(r)] =
            slot_to_next[static_cast<std::size_t>(slot) * 2 + (go_left ? 0 : 1)];
      }

      level = std::move(next_level);
    }

    // Nodes still open at the depth cap become leaves.
    for (const auto& work : level) {
      tree.nodes[static_cast<std::size_t>(work.node_id)].value = leaf_value(work.g, work.h);
    }

    for (std::int32_t r = 0; r < n_rows; ++r) {
      std::int32_t node_id = 0;
      while (tree.nodes[static_cast<std::size_t>(node_id)].feature >= 0) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
        node_id = node.left_bins[binned.at(r, node.feature)] ? node.left : node.right;
      }
      margin[static_cast<std::size_t>(r)] += tree.nodes[static_cast<std::size_t>(node_id)].value;
    }

    ens.trees.push_back(std::move(tree));
  }
  return ens;
}

std::vector<double> gbdt_predict(const Ensemble& ensemble, const EncodedTable& test) {
  const BinnedMatrix binned = apply_bins(ensemble.bins, test);
  std::vector<double> out(static_cast<std::size_t>(binned.n_rows));
  for (std::int32_t r = 0; r < binned.n_rows; ++r) {
    double margin = ensemble.base_score;
    for (const auto& tree : ensemble.trees) {
      std::int32_t node_id = 0;
      while (tree.nodes[static_cast<std::size_t>(node_id)].feature >= 0) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
        const std::uint8_t bin = binned.at(r, node.feature);
        node_id = bin < node.left_bins.size() && node.left_bins[bin] ? node.left : node.right;
      }
      margin += tree.nodes[static_cast<std::size_t>(node_id)].value;
    }
    out[static_cast<std::size_t>(r)] = stable_sigmoid(margin);
  }
  return out;
}

}  // namespace livekt
