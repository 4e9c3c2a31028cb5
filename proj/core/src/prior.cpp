#include "livekt/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "livekt/baselines.hpp"
#include "livekt/error.hpp"
#include "livekt/rng.hpp"

namespace livekt {

namespace {

// Rows are shuffled into context/query so neither side is biased by student
// index; tables keep the shuffled order.
EpisodeBatch assemble_episode(std::vector<EncodedRow> rows, std::int32_t T, double context_fraction,
                              Rng& rng, std::uint64_t seed) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  const auto n = static_cast<std::int64_t>(rows.size());
  auto n_context = static_cast<std::int64_t>(std::llround(context_fraction * static_cast<double>(n)));
  n_context = std::clamp<std::int64_t>(n_context, 1, n - 1);

  EpisodeBatch ep;
  ep.seed = seed;
  ep.context.T = T;
  ep.query.T = T;
  for (std::int64_t i = 0; i < n; ++i) {
    auto& row = rows[order[static_cast<std::size_t>(i)]];
    if (i < n_context) {
      ep.context.rows.push_back(std::move(row));
    } else {
      ep.query.rows.push_back(std::move(row));
    }
  }
  return ep;
}

}  // namespace

void KTPriorParams::validate() const {
  if (n_students_min < 4 || n_students_max < n_students_min) throw UsageError("kt prior: bad student range");
  if (n_questions_min < 1 || n_questions_max < n_questions_min) throw UsageError("kt prior: bad question range");
  if (n_skills_min < 1 || n_skills_max < n_skills_min) throw UsageError("kt prior: bad skill range");
  if (T_min < 2 || T_max < T_min) throw UsageError("kt prior: bad T range");
  if (gamma < 0.0) throw UsageError("kt prior: gamma must be >= 0");
  if (!(slip_min >= 0.0 && slip_max < 0.5 && slip_min <= slip_max)) throw UsageError("kt prior: slip must stay in [0, 0.5)");
  if (!(guess_min >= 0.0 && guess_max < 0.5 && guess_min <= guess_max)) throw UsageError("kt prior: guess must stay in [0, 0.5)");
  if (!(context_fraction > 0.0 && context_fraction < 1.0)) throw UsageError("kt prior: context fraction must be in (0,1)");
  if (max_resample < 0) throw UsageError("kt prior: max_resample must be >= 0");
}

double rasch_correct_prob(double theta, double difficulty, double gamma, int prior_attempts) {
  return stable_sigmoid(theta - difficulty + gamma * static_cast<double>(prior_attempts));
}

bool is_degenerate_episode(const EpisodeBatch& episode) {
  if (episode.query.rows.empty() || episode.context.rows.empty()) return true;
  const std::int8_t first = episode.query.rows.front().label;
  return std::all_of(episode.query.rows.begin(), episode.query.rows.end(),
                     [&](const EncodedRow& r) { return r.label == first; });
}

namespace {

EpisodeBatch sample_kt_once(const KTPriorParams& p, std::uint64_t seed) {
  Rng rng(hash_combine(seed, 0x4b54ULL));

  const auto T = static_cast<std::int32_t>(rng.range(p.T_min, p.T_max));
  const auto n_students = static_cast<int>(rng.range(p.n_students_min, p.n_students_max));
  const auto n_questions = static_cast<int>(rng.range(p.n_questions_min, p.n_questions_max));
  const auto n_skills = static_cast<int>(rng.range(p.n_skills_min, p.n_skills_max));
  const bool bkt = rng.bernoulli(p.bkt_mixture);

  std::vector<std::int32_t> q_skill(static_cast<std::size_t>(n_questions));
  std::vector<double> difficulty(static_cast<std::size_t>(n_questions));
  for (int q = 0; q < n_questions; ++q) {
    q_skill[static_cast<std::size_t>(q)] = 1 + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(n_skills)));
    difficulty[static_cast<std::size_t>(q)] = rng.normal(0.0, p.sigma_diff);
  }

  const double slip = rng.uniform(p.slip_min, p.slip_max);
  const double guess = rng.uniform(p.guess_min, p.guess_max);
  const double p_learn = rng.uniform(p.learn_min, p.learn_max);
  const double p_init = rng.uniform(p.init_mastery_min, p.init_mastery_max);

  std::vector<EncodedRow> rows;
  rows.reserve(static_cast<std::size_t>(n_students));
  std::vector<int> attempts(static_cast<std::size_t>(n_skills) + 1);
  std::vector<std::uint8_t> mastered(static_cast<std::size_t>(n_skills) + 1);
  std::vector<SeqItem> seq;

  for (int s = 0; s < n_students; ++s) {
    const double theta = rng.normal(0.0, p.sigma_theta);
    const int len = rng.bernoulli(p.full_length_prob) ? T : static_cast<int>(rng.range(2, T));

    std::fill(attempts.begin(), attempts.end(), 0);
    for (auto& m : mastered) m = rng.bernoulli(p_init) ? 1 : 0;

    seq.clear();
    for (int t = 0; t < len; ++t) {
      const auto q = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(n_questions)));
      const std::int32_t skill = q_skill[static_cast<std::size_t>(q)];
      bool correct;
      if (bkt) {
        auto& m = mastered[static_cast<std::size_t>(skill)];
        correct = rng.bernoulli(m ? 1.0 - slip : guess);
        if (!m && rng.bernoulli(p_learn)) m = 1;
      } else {
        const double prob = rasch_correct_prob(theta, difficulty[static_cast<std::size_t>(q)],
                                               p.gamma, attempts[static_cast<std::size_t>(skill)]);
        correct = rng.bernoulli(prob);
        ++attempts[static_cast<std::size_t>(skill)];
      }
      seq.push_back(SeqItem{q + 1, skill, static_cast<std::int8_t>(correct ? 1 : 0)});
    }

    if (auto row = build_row(seq, T, T, s + 1)) rows.push_back(std::move(*row));
  }

  return assemble_episode(std::move(rows), T, p.context_fraction, rng, seed);
}

}  // namespace

EpisodeBatch sample_kt_episode(const KTPriorParams& params, std::uint64_t seed) {
  params.validate();
  return sample_with_retry([&](std::uint64_t s) { return sample_kt_once(params, s); }, seed,
                           params.max_resample);
}

void SCMPriorParams::validate() const {
  if (n_rows_min < 4 || n_rows_max < n_rows_min) throw UsageError("scm prior: bad row range");
  if (T_min < 2 || T_max < T_min) throw UsageError("scm prior: bad T range");
  if (n_hidden < 1) throw UsageError("scm prior: n_hidden must be >= 1");
  if (bins_min < 2 || bins_max < bins_min) throw UsageError("scm prior: bad bin range");
  if (!(context_fraction > 0.0 && context_fraction < 1.0)) throw UsageError("scm prior: context fraction must be in (0,1)");
}

namespace {

EpisodeBatch sample_scm_once(const SCMPriorParams& p, std::uint64_t seed) {
  Rng rng(hash_combine(seed, 0x5c3aULL));

  const auto T = static_cast<std::int32_t>(rng.range(p.T_min, p.T_max));
  const auto n = static_cast<int>(rng.range(p.n_rows_min, p.n_rows_max));
  const int n_features = 3 * T - 1;

  // two-layer scorer over latent row coordinates
  std::vector<std::vector<double>> w1(static_cast<std::size_t>(p.n_hidden),
                                      std::vector<double>(static_cast<std::size_t>(n_features)));
  std::vector<double> w2(static_cast<std::size_t>(p.n_hidden));
  for (auto& row : w1) {
    for (auto& v : row) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(n_features)));
  }
  for (auto& v : w2) v = rng.normal();

  // per-column categorical bin layout; correctness columns stay binary
  std::vector<std::vector<double>> thresholds(static_cast<std::size_t>(n_features));
  for (int f = 0; f < n_features; ++f) {
    const bool correctness_col = f >= 2 * T;
    const int n_bins = correctness_col ? 2 : static_cast<int>(rng.range(p.bins_min, p.bins_max));
    auto& cuts = thresholds[static_cast<std::size_t>(f)];
    cuts.resize(static_cast<std::size_t>(n_bins - 1));
    for (auto& c : cuts) c = rng.normal();
    std::sort(cuts.begin(), cuts.end());
  }

  std::vector<std::vector<double>> latent(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(n_features)));
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    auto& z = latent[static_cast<std::size_t>(r)];
    for (auto& v : z) v = rng.normal();
    double score = 0.0;
    for (int h = 0; h < p.n_hidden; ++h) {
      double acc = 0.0;
      for (int f = 0; f < n_features; ++f) {
        acc += w1[static_cast<std::size_t>(h)][static_cast<std::size_t>(f)] * z[static_cast<std::size_t>(f)];
      }
      score += w2[static_cast<std::size_t>(h)] * std::tanh(acc);
    }
    scores[static_cast<std::size_t>(r)] = score;
  }

  std::vector<double> sorted = scores;
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double median_score = sorted[static_cast<std::size_t>(n / 2)];

  std::vector<EncodedRow> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    EncodedRow row;
    row.student_idx = r + 1;
    row.observed_len = T;
    row.questions.resize(static_cast<std::size_t>(T));
    row.skills.resize(static_cast<std::size_t>(T));
    row.past_correct.resize(static_cast<std::size_t>(T - 1));
    const auto& z = latent[static_cast<std::size_t>(r)];
    for (int f = 0; f < n_features; ++f) {
      const auto& cuts = thresholds[static_cast<std::size_t>(f)];
      const auto code = static_cast<std::int32_t>(
          1 + (std::upper_bound(cuts.begin(), cuts.end(), z[static_cast<std::size_t>(f)]) - cuts.begin()));
      if (f < T) {
        row.questions[static_cast<std::size_t>(f)] = code;
      } else if (f < 2 * T) {
        row.skills[static_cast<std::size_t>(f - T)] = code;
      } else {
        row.past_correct[static_cast<std::size_t>(f - 2 * T)] = code;
      }
    }
    row.label = static_cast<std::int8_t>(scores[static_cast<std::size_t>(r)] > median_score ? 1 : 0);
    rows.push_back(std::move(row));
  }

  return assemble_episode(std::move(rows), T, p.context_fraction, rng, seed);
}

}  // namespace

EpisodeBatch sample_scm_episode(const SCMPriorParams& params, std::uint64_t seed) {
  params.validate();
  return sample_with_retry([&](std::uint64_t s) { return sample_scm_once(params, s); }, seed,
                           params.max_resample);
}

}  // namespace livekt
