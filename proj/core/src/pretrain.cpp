#include "livekt/pretrain.hpp"

#include <algorithm>
#include <cmath>

#include "livekt/detail/minipfn_engine.hpp"
#include "livekt/error.hpp"
#include "livekt/threads.hpp"
#include "livekt/weights_io.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace livekt {

namespace {

using detail::for_each_tensor;

template <typename S>
void set_zero(MiniPFNWeightsT<S>& w) {
  for_each_tensor(w, [](const std::string&, auto& m) { m.setZero(); });
}

// 64-bit accumulation over all parameter gradients.
double global_grad_norm(MiniPFNWeights& g) {
  double sum = 0.0;
  for_each_tensor(g, [&](const std::string&, Eigen::MatrixXf& m) {
    sum += m.cast<double>().squaredNorm();
  });
  return std::sqrt(sum);
}

constexpr std::uint64_t kTrainStream = 0x7261ULL;
constexpr std::uint64_t kEvalStream = 0xe7a1ULL;
constexpr int kCurveWindow = 100;

struct TrainerState {
  MiniPFNWeights weights;
  AdamState adam;
  std::uint64_t episodes_done = 0;
  std::vector<float> episode_losses;  // all per-episode losses so far
};

void write_checkpoint(const TrainerState& st, const std::string& path) {
  WeightsContainer c = minipfn_to_container(st.weights, "minipfn_checkpoint");
  auto push_state = [&](const std::string& prefix, const MiniPFNWeights& w) {
    for_each_tensor(const_cast<MiniPFNWeights&>(w),
                    [&](const std::string& name, const Eigen::MatrixXf& m) {
                      NamedTensor t;
                      t.name = prefix + name;
                      t.shape = {static_cast<std::uint64_t>(m.rows()),
                                 static_cast<std::uint64_t>(m.cols())};
                      t.data.assign(m.data(), m.data() + m.size());
                      c.tensors.push_back(std::move(t));
                    });
  };
  push_state("adam_m.", st.adam.m);
  push_state("adam_v.", st.adam.v);

  NamedTensor meta;
  meta.name = "trainer_state";
  meta.shape = {2};
  meta.data = {static_cast<float>(st.episodes_done), static_cast<float>(st.adam.t)};
  c.tensors.push_back(std::move(meta));

  NamedTensor losses;
  losses.name = "episode_losses";
  losses.shape = {st.episode_losses.size()};
  losses.data = st.episode_losses;
  c.tensors.push_back(std::move(losses));

  save_weights_container(c, path);
}

TrainerState read_checkpoint(const std::string& path) {
  const WeightsContainer c = load_weights_container(path);
  if (c.kind != "minipfn_checkpoint") {
    throw RuntimeError("'" + path + "': not a pretraining checkpoint (kind '" + c.kind + "')");
  }
  TrainerState st;
  st.weights = minipfn_from_container(c);
  st.adam = make_adam_state(st.weights.config);
  auto pull_state = [&](const std::string& prefix, MiniPFNWeights& w) {
    for_each_tensor(w, [&](const std::string& name, Eigen::MatrixXf& m) {
      const NamedTensor& t = c.require(prefix + name);
      if (t.data.size() != static_cast<std::size_t>(m.size())) {
        throw RuntimeError("checkpoint tensor '" + t.name + "' has wrong size");
      }
      std::copy(t.data.begin(), t.data.end(), m.data());
    });
  };
  pull_state("adam_m.", st.adam.m);
  pull_state("adam_v.", st.adam.v);

  const NamedTensor& meta = c.require("trainer_state");
  if (meta.data.size() != 2) throw RuntimeError("checkpoint: bad trainer_state");
  st.episodes_done = static_cast<std::uint64_t>(meta.data[0]);
  st.adam.t = static_cast<std::uint64_t>(meta.data[1]);
  st.episode_losses = c.require("episode_losses").data;
  return st;
}

std::vector<LossCurvePoint> curve_from_losses(const std::vector<float>& losses) {
  std::vector<LossCurvePoint> curve;
  for (std::size_t end = kCurveWindow; end <= losses.size(); end += kCurveWindow) {
    double sum = 0.0;
    for (std::size_t i = end - kCurveWindow; i < end; ++i) sum += losses[i];
    curve.push_back({static_cast<std::uint64_t>(end), sum / kCurveWindow});
  }
  return curve;
}

PretrainResult run_training(TrainerState st, const EpisodeSampler& sampler,
                            const TrainParams& tp, const std::atomic<bool>* stop_flag) {
  tp.validate();
  const int n_threads = thread_count();
  const auto batch = static_cast<std::uint64_t>(tp.batch_episodes);

  std::uint64_t next_checkpoint =
      tp.checkpoint_interval > 0
          ? ((st.episodes_done / tp.checkpoint_interval) + 1) * tp.checkpoint_interval
          : 0;

  std::vector<MiniPFNWeights> episode_grads;
  std::vector<double> episode_losses_batch;
  MiniPFNWeights grad = init_weights<float>(st.weights.config, 0);

  while (st.episodes_done < tp.n_episodes) {
    if (stop_flag && stop_flag->load()) break;
    const std::uint64_t first = st.episodes_done;
    const std::uint64_t count = std::min(batch, tp.n_episodes - first);

    episode_grads.assign(count, grad);  // zeroed below
    episode_losses_batch.assign(count, 0.0);
    for (auto& g : episode_grads) set_zero(g);

    std::string error_msg;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(n_threads)
#endif
    for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(count); ++bi) {
      try {
        const std::uint64_t ep_index = first + static_cast<std::uint64_t>(bi);
        const EpisodeBatch ep = sampler(episode_seed(tp.seed, ep_index));
        detail::ForwardCache<float> cache;
        detail::forward_cached(st.weights, ep.context, ep.query, cache,
                               st.weights.config.dropout,
                               hash_combine(episode_seed(tp.seed, ep_index), 0xd70ULL));
        episode_losses_batch[static_cast<std::size_t>(bi)] = detail::loss_from_cache(cache, ep.query);
        detail::backward(st.weights, ep.context, ep.query, cache,
                         episode_grads[static_cast<std::size_t>(bi)]);
      } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
        if (error_msg.empty()) error_msg = e.what();
      }
    }
    if (!error_msg.empty()) throw RuntimeError("pretrain batch failed: " + error_msg);

    for (std::uint64_t bi = 0; bi < count; ++bi) {
      const double loss = episode_losses_batch[bi];
      if (!std::isfinite(loss)) {
        throw RuntimeError("pretrain: non-finite loss at episode " + std::to_string(first + bi));
      }
      st.episode_losses.push_back(static_cast<float>(loss));
    }

    // mean gradient over the batch, accumulated in fixed episode order
    set_zero(grad);
    for (std::uint64_t bi = 0; bi < count; ++bi) {
      std::vector<const Eigen::MatrixXf*> src;
      for_each_tensor(episode_grads[bi],
                      [&](const std::string&, Eigen::MatrixXf& m) { src.push_back(&m); });
      std::size_t i = 0;
      for_each_tensor(grad, [&](const std::string&, Eigen::MatrixXf& m) { m += *src[i++]; });
    }
    const auto inv = static_cast<float>(1.0 / static_cast<double>(count));
    for_each_tensor(grad, [&](const std::string&, Eigen::MatrixXf& m) { m *= inv; });

    const double norm = global_grad_norm(grad);
    if (tp.clip_norm > 0.0 && norm > tp.clip_norm) {
      const auto scale = static_cast<float>(tp.clip_norm / norm);
      for_each_tensor(grad, [&](const std::string&, Eigen::MatrixXf& m) { m *= scale; });
    }

    adam_step(st.weights, grad, st.adam, tp);
    st.episodes_done += count;

    if (next_checkpoint > 0 && !tp.checkpoint_path.empty() && st.episodes_done >= next_checkpoint) {
      write_checkpoint(st, tp.checkpoint_path);
      next_checkpoint += tp.checkpoint_interval;
    }
  }

  if (!tp.checkpoint_path.empty()) write_checkpoint(st, tp.checkpoint_path);

  PretrainResult result;
  result.weights = std::move(st.weights);
  result.curve = curve_from_losses(st.episode_losses);
  result.episodes_done = st.episodes_done;
  return result;
}

}  // namespace

void TrainParams::validate() const {
  if (batch_episodes < 1) throw UsageError("pretrain: batch_episodes must be >= 1");
  if (learning_rate <= 0.0) throw UsageError("pretrain: learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw UsageError("pretrain: betas must be in [0,1)");
  }
  if (adam_eps <= 0.0) throw UsageError("pretrain: adam_eps must be > 0");
}

AdamState make_adam_state(const MiniPFNConfig& config) {
  AdamState state;
  state.m = init_weights<float>(config, 0);
  state.v = init_weights<float>(config, 0);
  set_zero(state.m);
  set_zero(state.v);
  return state;
}

void adam_step(MiniPFNWeights& w, const MiniPFNWeights& g, AdamState& state,
               const TrainParams& tp) {
  ++state.t;
  const auto b1 = static_cast<float>(tp.beta1);
  const auto b2 = static_cast<float>(tp.beta2);
  const double bc1 = 1.0 - std::pow(tp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(tp.beta2, static_cast<double>(state.t));
  const auto lr = static_cast<float>(tp.learning_rate);
  const auto eps = static_cast<float>(tp.adam_eps);
  const auto ibc1 = static_cast<float>(1.0 / bc1);
  const auto ibc2 = static_cast<float>(1.0 / bc2);

  std::vector<const Eigen::MatrixXf*> gs;
  std::vector<Eigen::MatrixXf*> ms, vs;
  for_each_tensor(const_cast<MiniPFNWeights&>(g),
                  [&](const std::string&, Eigen::MatrixXf& m) { gs.push_back(&m); });
  for_each_tensor(state.m, [&](const std::string&, Eigen::MatrixXf& m) { ms.push_back(&m); });
  for_each_tensor(state.v, [&](const std::string&, Eigen::MatrixXf& m) { vs.push_back(&m); });
  std::size_t i = 0;
  for_each_tensor(w, [&](const std::string&, Eigen::MatrixXf& param) {
    const Eigen::MatrixXf& grad = *gs[i];
    Eigen::MatrixXf& m = *ms[i];
    Eigen::MatrixXf& v = *vs[i];
    m = b1 * m + (1.0f - b1) * grad;
    v = (b2 * v.array() + (1.0f - b2) * grad.array().square()).matrix();
    param.array() -= lr * (m.array() * ibc1) / ((v.array() * ibc2).sqrt() + eps);
    ++i;
  });
}

std::uint64_t episode_seed(std::uint64_t master_seed, std::uint64_t index) {
  return hash_combine(hash_combine(master_seed, kTrainStream), index);
}

std::uint64_t eval_episode_seed(std::uint64_t master_seed, std::uint64_t index) {
  return hash_combine(hash_combine(master_seed, kEvalStream), index);
}

PretrainResult pretrain(const EpisodeSampler& sampler, const TrainParams& params,
                        const MiniPFNConfig& config, const std::atomic<bool>* stop_flag) {
  config.validate();
  TrainerState st;
  st.weights = init_weights<float>(config, params.seed);
  st.adam = make_adam_state(config);
  return run_training(std::move(st), sampler, params, stop_flag);
}

PretrainResult pretrain_resume(const std::string& checkpoint_path, const EpisodeSampler& sampler,
                               const TrainParams& params, const std::atomic<bool>* stop_flag) {
  return run_training(read_checkpoint(checkpoint_path), sampler, params, stop_flag);
}

double episode_loss(const MiniPFNWeights& weights, const EpisodeBatch& episode) {
  detail::ForwardCache<float> cache;
  detail::forward_cached(weights, episode.context, episode.query, cache);
  return detail::loss_from_cache(cache, episode.query);
}

GradCheckResult grad_check(const MiniPFNConfig& config, const EpisodeBatch& episode,
                           double fd_step, bool linear_only, std::uint64_t weight_seed) {
  config.validate();
  MiniPFNWeightsT<double> w = init_weights<double>(config, weight_seed);
  if (linear_only) w.blocks.clear();  // embeddings -> head only

  // A zero head blocks gradient flow into everything upstream, so give it
  // small nonzero values for the check.
  Rng rng(hash_combine(weight_seed, 0x9cadULL));
  for (Eigen::Index i = 0; i < w.head_w.size(); ++i) {
    w.head_w.data()[i] = rng.normal(0.0, 0.2);
  }
  w.head_b(0, 0) = rng.normal(0.0, 0.1);
  w.head_b(1, 0) = rng.normal(0.0, 0.1);

  const auto loss_at = [&]() {
    detail::ForwardCache<double> cache;
    detail::forward_cached(w, episode.context, episode.query, cache, config.dropout,
                           hash_combine(episode.seed, 0xd70ULL));
    return detail::loss_from_cache(cache, episode.query);
  };

  MiniPFNWeightsT<double> grads = w;
  set_zero(grads);
  {
    detail::ForwardCache<double> cache;
    detail::forward_cached(w, episode.context, episode.query, cache, config.dropout,
                           hash_combine(episode.seed, 0xd70ULL));
    detail::backward(w, episode.context, episode.query, cache, grads);
  }

  GradCheckResult result;
  std::vector<Eigen::MatrixXd*> analytic;
  for_each_tensor(grads, [&](const std::string&, Eigen::MatrixXd& m) { analytic.push_back(&m); });
  std::size_t ti = 0;
  for_each_tensor(w, [&](const std::string& name, Eigen::MatrixXd& param) {
    Eigen::MatrixXd& ga = *analytic[ti++];
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + fd_step;
      const double lp = loss_at();
      param.data()[i] = saved - fd_step;
      const double lm = loss_at();
      param.data()[i] = saved;
      const double gn = (lp - lm) / (2.0 * fd_step);
      const double gav = ga.data()[i];
      const double rel = std::abs(gav - gn) / std::max({1.0, std::abs(gav), std::abs(gn)});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name + "[" + std::to_string(i) + "]";
      }
    }
  });
  return result;
}

}  // namespace livekt
