#pragma once

#include <cstdint>
#include <functional>

#include "livekt/encoding.hpp"
#include "livekt/error.hpp"

namespace livekt {

// One synthetic pretraining task: a labeled context table and a query table
// whose labels are held out for the loss.
struct EpisodeBatch {
  EncodedTable context;
  EncodedTable query;
  std::uint64_t seed = 0;
};

// Student-simulation prior. Each episode draws a fresh population and item
// bank; a per-episode coin picks between two generators:
//   Rasch-learning: p(correct) = sigmoid(theta_i - d_q + gamma * prior
//   attempts on skill(q)); BKT-style: latent mastery flips on with p_learn
//   per attempt, p(correct) = 1-slip if mastered else guess.
struct KTPriorParams {
  int n_students_min = 24;
  int n_students_max = 64;
  int n_questions_min = 8;
  int n_questions_max = 48;
  int n_skills_min = 2;
  int n_skills_max = 8;
  int T_min = 4;
  int T_max = 16;
  double sigma_theta = 1.1;   // ability spread
  double sigma_diff = 1.1;    // difficulty spread
  double gamma = 0.25;        // learning gain per prior same-skill attempt
  double slip_min = 0.02, slip_max = 0.3;
  double guess_min = 0.05, guess_max = 0.4;
  double learn_min = 0.05, learn_max = 0.35;
  double init_mastery_min = 0.1, init_mastery_max = 0.6;
  double bkt_mixture = 0.5;          // probability of the BKT variant
  double full_length_prob = 0.7;     // otherwise length ~ U[2, T]
  double context_fraction = 0.8;
  int max_resample = 16;

  void validate() const;
};

double rasch_correct_prob(double theta, double difficulty, double gamma, int prior_attempts);

EpisodeBatch sample_kt_episode(const KTPriorParams& params, std::uint64_t seed);

// Generic structural prior: a random two-layer network scores latent inputs,
// labels split at the median score, features are the latent coordinates
// discretized into random category bins shaped like a KT table.
struct SCMPriorParams {
  int n_rows_min = 24;
  int n_rows_max = 64;
  int T_min = 4;
  int T_max = 12;
  int n_hidden = 8;
  int bins_min = 2;
  int bins_max = 12;
  double context_fraction = 0.8;
  int max_resample = 16;

  void validate() const;
};

EpisodeBatch sample_scm_episode(const SCMPriorParams& params, std::uint64_t seed);

// Query sets with single-class labels cannot be scored; such draws are
// resampled with seed+1 up to max_resample times, then rejected.
bool is_degenerate_episode(const EpisodeBatch& episode);

template <typename SampleOnce>
EpisodeBatch sample_with_retry(SampleOnce&& sample_once, std::uint64_t seed, int max_resample) {
  for (int attempt = 0; attempt <= max_resample; ++attempt) {
    EpisodeBatch ep = sample_once(seed + static_cast<std::uint64_t>(attempt));
    if (!is_degenerate_episode(ep)) return ep;
  }
  throw RuntimeError("episode sampling: " + std::to_string(max_resample + 1) +
                     " consecutive degenerate draws from seed " + std::to_string(seed));
}

using EpisodeSampler = std::function<EpisodeBatch(std::uint64_t)>;

}  // namespace livekt
