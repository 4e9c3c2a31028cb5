#pragma once

#include "livekt/encoding.hpp"
#include "livekt/rng.hpp"

namespace livekt::bench {

inline EncodedTable random_table(int n_rows, int T, std::uint64_t seed, int n_questions = 200) {
  Rng rng(hash_combine(seed, 0xbe9cULL));
  EncodedTable table;
  table.T = T;
  for (int r = 0; r < n_rows; ++r) {
    EncodedRow row;
    row.student_idx = r + 1;
    row.observed_len = T;
    row.questions.resize(static_cast<std::size_t>(T));
    row.skills.resize(static_cast<std::size_t>(T));
    row.past_correct.resize(static_cast<std::size_t>(T - 1));
    for (auto& q : row.questions) q = 1 + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(n_questions)));
    for (auto& s : row.skills) s = 1 + static_cast<std::int32_t>(rng.below(17));
    for (auto& c : row.past_correct) c = rng.bernoulli(0.5) ? kCorrectCode : kIncorrectCode;
    row.label = static_cast<std::int8_t>(rng.bernoulli(0.5) ? 1 : 0);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace livekt::bench
