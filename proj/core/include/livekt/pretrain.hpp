#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "livekt/minipfn.hpp"
#include "livekt/prior.hpp"

namespace livekt {

struct TrainParams {
  std::uint64_t n_episodes = 10000;
  int batch_episodes = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // global gradient norm
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_interval = 2000;  // episodes; effective only with a path
  std::string checkpoint_path;

  void validate() const;
};

struct LossCurvePoint {
  std::uint64_t episode = 0;     // 100, 200, ...
  double smoothed_loss = 0.0;    // mean episode loss over the trailing 100
};

// Adaptive-moment state mirrors the weight shapes.
struct AdamState {
  MiniPFNWeights m;
  MiniPFNWeights v;
  std::uint64_t t = 0;
};

AdamState make_adam_state(const MiniPFNConfig& config);
void adam_step(MiniPFNWeights& weights, const MiniPFNWeights& grads, AdamState& state,
               const TrainParams& params);

struct PretrainResult {
  MiniPFNWeights weights;
  std::vector<LossCurvePoint> curve;
  std::uint64_t episodes_done = 0;
};

// Minimizes mean query-row cross entropy over episodes drawn from the
// sampler. Episode i always uses seed derive(seed, i), so generation order
// and parallelism cannot change the result; stop_flag (e.g. SIGINT) ends
// training at the next batch boundary after writing a final checkpoint.
PretrainResult pretrain(const EpisodeSampler& sampler, const TrainParams& params,
                        const MiniPFNConfig& config,
                        const std::atomic<bool>* stop_flag = nullptr);

// Continues from a checkpoint container (weights + optimizer state); the
// final weights are bit-identical to an uninterrupted run with the same seed.
PretrainResult pretrain_resume(const std::string& checkpoint_path, const EpisodeSampler& sampler,
                               const TrainParams& params,
                               const std::atomic<bool>* stop_flag = nullptr);

// Seed for episode index i under master seed s; eval streams use a different
// tag so held-out episodes never collide with training episodes.
std::uint64_t episode_seed(std::uint64_t master_seed, std::uint64_t index);
std::uint64_t eval_episode_seed(std::uint64_t master_seed, std::uint64_t index);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
};

// Central finite differences (64-bit evaluation) against the analytic
// backward pass, over every parameter. relative error =
// |ga - gn| / max(1, |ga|, |gn|). linear_only bypasses all blocks, leaving
// the embeddings -> head composition where differences are near-exact.
GradCheckResult grad_check(const MiniPFNConfig& config, const EpisodeBatch& episode,
                           double fd_step = 1e-3, bool linear_only = false,
                           std::uint64_t weight_seed = 1);

// Loss/grads of one episode at the given weights; exposed for tests.
double episode_loss(const MiniPFNWeights& weights, const EpisodeBatch& episode);

}  // namespace livekt
