#include "livekt/encoding.hpp"

#include <algorithm>

#include "livekt/error.hpp"

namespace livekt {

std::optional<EncodedRow> build_row(std::span<const SeqItem> sequence, std::int32_t T,
                                    std::int32_t visible, std::int32_t student_idx) {
  if (T < 2) throw RuntimeError("horizon T must be >= 2, got " + std::to_string(T));
  if (visible < 0) visible = 0;

  const auto len = static_cast<std::int32_t>(sequence.size());
  const std::int32_t k = std::min({visible, T, len});
  if (k < 2) return std::nullopt;

  EncodedRow row;
  row.student_idx = student_idx;
  row.observed_len = k;
  row.questions.assign(static_cast<std::size_t>(T), kPad);
  row.skills.assign(static_cast<std::size_t>(T), kPad);
  row.past_correct.assign(static_cast<std::size_t>(T - 1), kPad);

  const std::int32_t offset = T - k;  // leading PAD count
  for (std::int32_t i = 0; i < k; ++i) {
    const SeqItem& item = sequence[static_cast<std::size_t>(i)];
    const std::int32_t pos = offset + i;
    row.questions[static_cast<std::size_t>(pos)] = item.question;
    row.skills[static_cast<std::size_t>(pos)] = item.skill;
    if (pos < T - 1) row.past_correct[static_cast<std::size_t>(pos)] = correct_code(item.correct);
  }
  row.label = sequence[static_cast<std::size_t>(k - 1)].correct;
  return row;
}

TablePair build_tables(const Dataset& dataset, const Split& split, std::int32_t T,
                       std::int32_t visible_train, std::int32_t visible_test) {
  if (T < 2) throw RuntimeError("horizon T must be >= 2, got " + std::to_string(T));
  if (visible_train < 2) throw RuntimeError("visible_train must be >= 2");
  if (visible_test < 1) throw RuntimeError("visible_test must be >= 1");

  TablePair out;
  out.train.T = T;
  out.test.T = T;

  // Dataset student order, not split order, so row order is independent of
  // how the split sets are stored.
  for (std::int32_t s = 1; s <= dataset.n_students(); ++s) {
    const auto& seq = dataset.sequences[static_cast<std::size_t>(s - 1)];
    if (split.is_train(s)) {
      if (auto row = build_row(seq, T, visible_train, s)) {
        out.train.rows.push_back(std::move(*row));
      } else {
        ++out.skipped_train;
      }
    } else {
      // The +1 interaction carries the target question/skill; its correctness
      // becomes the held-out label and is never a feature.
      if (auto row = build_row(seq, T, visible_test + 1, s)) {
        out.test.rows.push_back(std::move(*row));
      } else {
        ++out.skipped_test;
      }
    }
  }

  if (out.train.rows.empty()) throw RuntimeError("train table is empty after encoding");
  if (out.test.rows.empty()) throw RuntimeError("test table is empty after encoding");
  return out;
}

void dump_table_csv(const EncodedTable& table, std::ostream& out) {
  const std::int32_t T = table.T;
  for (std::int32_t t = 1; t <= T; ++t) out << 'q' << t << ',';
  for (std::int32_t t = 1; t <= T; ++t) out << 's' << t << ',';
  for (std::int32_t t = 1; t < T; ++t) out << 'c' << t << ',';
  out << "label\n";
  for (const auto& row : table.rows) {
    for (const auto q : row.questions) out << q << ',';
    for (const auto s : row.skills) out << s << ',';
    for (const auto c : row.past_correct) out << c << ',';
    out << static_cast<int>(row.label) << '\n';
  }
}

}  // namespace livekt
