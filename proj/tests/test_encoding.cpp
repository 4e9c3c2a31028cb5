#include <doctest.h>

#include <sstream>

#include "livekt/encoding.hpp"
#include "livekt/error.hpp"
#include "livekt/rng.hpp"
#include "support.hpp"

using namespace livekt;

namespace {

std::vector<SeqItem> make_seq(const std::vector<std::int8_t>& corrects) {
  std::vector<SeqItem> seq;
  for (std::size_t i = 0; i < corrects.size(); ++i) {
    seq.push_back(SeqItem{static_cast<std::int32_t>(10 + i), static_cast<std::int32_t>(1 + i % 3),
                          corrects[i]});
  }
  return seq;
}

}  // namespace

TEST_CASE("full row: k == T leaves no PAD anywhere") {
  const auto seq = make_seq({1, 0, 1, 1, 0});
  const auto row = build_row(seq, 5, 5, 7);
  REQUIRE(row.has_value());
  CHECK(row->observed_len == 5);
  CHECK(row->student_idx == 7);
  for (const auto q : row->questions) CHECK(q != kPad);
  for (const auto s : row->skills) CHECK(s != kPad);
  for (const auto c : row->past_correct) CHECK(c != kPad);
  CHECK(row->label == 0);
}

TEST_CASE("hand trace: k=3, T=5, corrects (1,0,1)") {
  const auto seq = make_seq({1, 0, 1});
  const auto row = build_row(seq, 5, 3);
  REQUIRE(row.has_value());
  CHECK(row->questions == std::vector<std::int32_t>{kPad, kPad, 10, 11, 12});
  CHECK(row->skills == std::vector<std::int32_t>{kPad, kPad, 1, 2, 3});
  CHECK(row->past_correct ==
        std::vector<std::int32_t>{kPad, kPad, kCorrectCode, kIncorrectCode});
  CHECK(row->label == 1);
  CHECK(row->observed_len == 3);
}

TEST_CASE("k < 2 rows are skipped; T < 2 is an error") {
  const auto seq = make_seq({1});
  CHECK(!build_row(seq, 5, 5).has_value());
  CHECK(!build_row(make_seq({1, 0, 1}), 5, 1).has_value());
  CHECK(!build_row(make_seq({1, 0, 1}), 5, 0).has_value());
  CHECK_THROWS_AS(build_row(seq, 1, 1), RuntimeError);
}

TEST_CASE("visible caps at T and at sequence length") {
  const auto seq = make_seq({1, 0, 1, 1, 0, 0, 1});
  const auto row = build_row(seq, 4, 100);
  REQUIRE(row.has_value());
  CHECK(row->observed_len == 4);  // truncated to the first T
  CHECK(row->label == 1);         // 4th interaction
  const auto short_row = build_row(make_seq({0, 1, 1}), 4, 100);
  REQUIRE(short_row.has_value());
  CHECK(short_row->observed_len == 3);
  CHECK(short_row->label == 1);
}

namespace {

Dataset toy_dataset() {
  std::istringstream in(
      "student_id,question_id,skill_id,correct,timestamp\n"
      "t1,q1,k1,1,1\nt1,q2,k1,0,2\nt1,q3,k1,1,3\nt1,q4,k1,1,4\nt1,q5,k1,0,5\n"
      "t2,q1,k1,0,1\nt2,q2,k1,1,2\nt2,q3,k1,1,3\n"
      "u1,q1,k1,1,1\nu1,q2,k1,0,2\nu1,q3,k1,0,3\nu1,q4,k1,1,4\n");
  return remap_ids(parse_interactions(in));
}

}  // namespace

TEST_CASE("toy build_tables: shapes and the held-out test label") {
  const Dataset ds = toy_dataset();
  // t1 (len 5) and t2 (len 3) train; u1 (len 4) test
  Split split;
  split.train_students = {1, 2};
  split.test_students = {3};
  const TablePair tables = build_tables(ds, split, 3, 3, 2);

  CHECK(tables.train.n_rows() == 2);
  CHECK(tables.train.width() == 8);
  CHECK(tables.test.n_rows() == 1);
  CHECK(tables.test.width() == 8);
  CHECK(tables.skipped_train == 0);
  CHECK(tables.skipped_test == 0);

  // the test row exposes q/s of its 3rd interaction and holds out its label
  const EncodedRow& test_row = tables.test.rows[0];
  CHECK(test_row.observed_len == 3);
  CHECK(ds.question_vocab.external(test_row.questions[2]) == "q3");
  CHECK(test_row.label == 0);  // u1's third interaction
  // while its past_correct covers interactions 1..2 only
  CHECK(test_row.past_correct[0] == kCorrectCode);
  CHECK(test_row.past_correct[1] == kIncorrectCode);

  // train rows end at their 3rd interaction with its correctness as label
  CHECK(tables.train.rows[0].label == 1);  // t1: (1,0,1)
  CHECK(tables.train.rows[1].label == 1);  // t2: (0,1,1)
}

TEST_CASE("saturated visibility equals offline encoding at horizon T") {
  const Dataset ds = test::make_random_dataset(30, 9, 21);
  Split split = split_students(ds, 0.8, 1);
  const TablePair a = build_tables(ds, split, 5, 5, 4);
  const TablePair b = build_tables(ds, split, 5, 100, 4);
  // every train sequence of length >= 5 is identical; shorter ones too since
  // min(visible, T, len) saturates the same way
  CHECK(test::tables_equal(a.train, b.train));
}

TEST_CASE("build_tables is deterministic") {
  const Dataset ds = test::make_random_dataset(30, 9, 22);
  const Split split = split_students(ds, 0.8, 2);
  const TablePair a = build_tables(ds, split, 5, 5, 4);
  const TablePair b = build_tables(ds, split, 5, 5, 4);
  CHECK(test::tables_equal(a.train, b.train));
  CHECK(test::tables_equal(a.test, b.test));
}

TEST_CASE("empty sides are reported by name") {
  const Dataset ds = toy_dataset();
  Split split;
  split.train_students = {1, 2, 3};
  CHECK_THROWS_WITH_AS(build_tables(ds, split, 3, 3, 2), doctest::Contains("test"), RuntimeError);
  Split split2;
  split2.test_students = {1, 2, 3};
  CHECK_THROWS_WITH_AS(build_tables(ds, split2, 3, 3, 2), doctest::Contains("train"), RuntimeError);
}

TEST_CASE("encoding invariants hold on randomized sequences") {
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    const int len = 1 + static_cast<int>(rng.below(30));
    std::vector<SeqItem> seq;
    for (int i = 0; i < len; ++i) {
      seq.push_back(SeqItem{1 + static_cast<std::int32_t>(rng.below(50)),
                            1 + static_cast<std::int32_t>(rng.below(7)),
                            static_cast<std::int8_t>(rng.bernoulli(0.5) ? 1 : 0)});
    }
    for (const std::int32_t T : {5, 10, 15, 20}) {
      const int visible = 1 + static_cast<int>(rng.below(25));
      const auto row = build_row(seq, T, visible);
      const int k = std::min({visible, static_cast<int>(T), len});
      if (k < 2) {
        CHECK(!row.has_value());
        continue;
      }
      REQUIRE(row.has_value());

      // width law
      CHECK(static_cast<std::int32_t>(row->questions.size() + row->skills.size() +
                                      row->past_correct.size()) == 3 * T - 1);
      // right alignment + PAD exclusivity
      for (std::int32_t c = 0; c < T; ++c) {
        const bool should_pad = c < T - k;
        CHECK((row->questions[static_cast<std::size_t>(c)] == kPad) == should_pad);
        CHECK((row->skills[static_cast<std::size_t>(c)] == kPad) == should_pad);
      }
      for (std::int32_t c = 0; c + 1 < T; ++c) {
        const bool should_pad = c < T - k;
        CHECK((row->past_correct[static_cast<std::size_t>(c)] == kPad) == should_pad);
      }
      CHECK(row->questions.back() != kPad);
      // label consistency with the raw sequence
      CHECK(row->label == seq[static_cast<std::size_t>(k - 1)].correct);

      // prefix property: one more visible interaction only shifts content
      if (k < len && k < T) {
        const auto next = build_row(seq, T, k + 1);
        REQUIRE(next.has_value());
        for (std::int32_t c = 0; c + 1 < T; ++c) {
          CHECK(next->questions[static_cast<std::size_t>(c)] ==
                row->questions[static_cast<std::size_t>(c + 1)]);
        }
      }
    }
  }
}

TEST_CASE("table csv dump renders PAD as 0 with the documented header") {
  const auto seq = make_seq({1, 0});
  EncodedTable table;
  table.T = 3;
  table.rows.push_back(*build_row(seq, 3, 2, 1));
  std::ostringstream out;
  dump_table_csv(table, out);
  CHECK(out.str() ==
        "q1,q2,q3,s1,s2,s3,c1,c2,label\n"
        "0,10,11,0,1,2,0,2,0\n");
}
