#pragma once

// Shared fixtures and independent reference implementations. Everything here
// stays deliberately naive: these are the oracles the real code is checked
// against, so they must not share its machinery.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "livekt/data_model.hpp"
#include "livekt/encoding.hpp"
#include "livekt/rng.hpp"

namespace livekt::test {

// O(n^2) pairwise AUC: (wins + 0.5 * ties) / (n_pos * n_neg).
inline double brute_force_auc(const std::vector<double>& scores,
                              const std::vector<std::int8_t>& labels) {
  double wins = 0.0, ties = 0.0;
  std::int64_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        ties += 1.0;
      }
    }
  }
  return (wins + 0.5 * ties) / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Ability/difficulty (Rasch) interaction generator producing a full Dataset
// through the real CSV parsing + remapping path.
struct RaschDatasetSpec {
  int n_students = 100;
  int n_questions = 30;
  int n_skills = 5;
  int seq_len = 12;
  double sigma_theta = 1.2;
  double sigma_diff = 1.2;
  double gamma = 0.0;
  std::uint64_t seed = 1;
};

inline Dataset make_rasch_dataset(const RaschDatasetSpec& spec) {
  Rng rng(hash_combine(spec.seed, 0x7357ULL));
  std::vector<double> theta(static_cast<std::size_t>(spec.n_students));
  std::vector<double> diff(static_cast<std::size_t>(spec.n_questions));
  std::vector<int> skill(static_cast<std::size_t>(spec.n_questions));
  for (auto& t : theta) t = rng.normal(0.0, spec.sigma_theta);
  for (auto& d : diff) d = rng.normal(0.0, spec.sigma_diff);
  for (auto& s : skill) s = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_skills)));

  std::ostringstream csv;
  csv << "student_id,question_id,skill_id,correct,timestamp\n";
  std::vector<int> attempts(static_cast<std::size_t>(spec.n_skills) + 1);
  for (int s = 0; s < spec.n_students; ++s) {
    std::fill(attempts.begin(), attempts.end(), 0);
    for (int t = 0; t < spec.seq_len; ++t) {
      const int q = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_questions)));
      const int k = skill[static_cast<std::size_t>(q)];
      const double z = theta[static_cast<std::size_t>(s)] - diff[static_cast<std::size_t>(q)] +
                       spec.gamma * attempts[static_cast<std::size_t>(k)];
      ++attempts[static_cast<std::size_t>(k)];
      const int correct = rng.uniform() < 1.0 / (1.0 + std::exp(-z)) ? 1 : 0;
      csv << "s" << s << ",q" << q << ",k" << k << ',' << correct << ',' << t << '\n';
    }
  }
  std::istringstream in(csv.str());
  return remap_ids(parse_interactions(in));
}

inline bool rows_equal(const EncodedRow& a, const EncodedRow& b) {
  return a.student_idx == b.student_idx && a.questions == b.questions && a.skills == b.skills &&
         a.past_correct == b.past_correct && a.label == b.label && a.observed_len == b.observed_len;
}

inline bool tables_equal(const EncodedTable& a, const EncodedTable& b) {
  if (a.T != b.T || a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (!rows_equal(a.rows[i], b.rows[i])) return false;
  }
  return true;
}

// Random per-student sequences with occasional missing skills and shuffled
// timestamps, exercised through the parser.
inline Dataset make_random_dataset(int n_students, int max_len, std::uint64_t seed) {
  Rng rng(hash_combine(seed, 0xda7aULL));
  std::ostringstream csv;
  csv << "student_id,question_id,skill_id,correct,timestamp\n";
  for (int s = 0; s < n_students; ++s) {
    const int len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len)));
    for (int t = 0; t < len; ++t) {
      csv << "s" << s << ",q" << rng.below(40) << ',';
      if (!rng.bernoulli(0.1)) csv << "k" << rng.below(8);
      csv << ',' << (rng.bernoulli(0.5) ? 1 : 0) << ',' << t << '\n';
    }
  }
  std::istringstream in(csv.str());
  return remap_ids(parse_interactions(in));
}

}  // namespace livekt::test
