#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "livekt/data_model.hpp"

namespace livekt {

// Correctness cells are stored shifted so 0 stays the global PAD code.
inline constexpr std::int32_t kIncorrectCode = 1;
inline constexpr std::int32_t kCorrectCode = 2;

inline constexpr std::int32_t correct_code(std::int8_t correct) {
  return correct ? kCorrectCode : kIncorrectCode;
}

// One student as a fixed-width categorical row: questions and skills over T
// positions, correctness over the first T-1 positions, plus a label column
// holding the correctness of the interaction at the last position.
struct EncodedRow {
  std::int32_t student_idx = 0;
  std::vector<std::int32_t> questions;     // length T
  std::vector<std::int32_t> skills;        // length T
  std::vector<std::int32_t> past_correct;  // length T-1, codes {0,1,2}
  std::int8_t label = 0;
  std::int32_t observed_len = 0;  // real (non-PAD) positions, <= T
};

struct EncodedTable {
  std::int32_t T = 0;
  std::vector<EncodedRow> rows;

  std::int32_t width() const { return 3 * T - 1; }  // feature cells per row
  std::int32_t n_rows() const { return static_cast<std::int32_t>(rows.size()); }

  // Flat feature access: [0,T) questions, [T,2T) skills, [2T,3T-1) past_correct.
  std::int32_t cell(std::int32_t row, std::int32_t col) const {
    const EncodedRow& r = rows[static_cast<std::size_t>(row)];
    if (col < T) return r.questions[static_cast<std::size_t>(col)];
    if (col < 2 * T) return r.skills[static_cast<std::size_t>(col - T)];
    return r.past_correct[static_cast<std::size_t>(col - 2 * T)];
  }
};

// Builds one row from the first min(visible, T, len) interactions of a
// sequence, right-aligned. Returns nullopt (skip) when fewer than 2
// interactions are usable: the label needs at least one past interaction of
// context.
std::optional<EncodedRow> build_row(std::span<const SeqItem> sequence, std::int32_t T,
                                    std::int32_t visible, std::int32_t student_idx = 0);

struct TablePair {
  EncodedTable train;
  EncodedTable test;
  std::int32_t skipped_train = 0;
  std::int32_t skipped_test = 0;
};

// liveKT snapshot at one horizon: train students contribute their first
// visible_train interactions (the last one supplies the exposed train label);
// test students contribute visible_test fully observed interactions plus the
// next interaction's question/skill, whose correctness is the held-out label.
TablePair build_tables(const Dataset& dataset, const Split& split, std::int32_t T,
                       std::int32_t visible_train, std::int32_t visible_test);

// Debug dump: q1..qT,s1..sT,c1..c{T-1},label with PAD rendered as 0.
void dump_table_csv(const EncodedTable& table, std::ostream& out);

}  // namespace livekt
