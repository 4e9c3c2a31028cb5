#include "livekt/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "livekt/error.hpp"
#include "livekt/rng.hpp"

namespace livekt {

namespace {

constexpr const char* kHeader = "student_id,question_id,skill_id,correct,timestamp";

std::string strip_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

// Splits one CSV line into exactly 5 fields. IDs never contain commas.
bool split5(const std::string& line, std::string out[5]) {
  std::size_t field = 0, start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      if (field >= 5) return false;
      out[field++] = line.substr(start, i - start);
      start = i + 1;
    }
  }
  return field == 5;
}

bool parse_i64(const std::string& s, std::int64_t& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

[[noreturn]] void fail_row(std::uint64_t line_no, const char* column, const std::string& detail) {
  std::ostringstream os;
  os << "parse error at line " << line_no << ", column '" << column << "': " << detail;
  throw RuntimeError(os.str());
}

}  // namespace

InteractionLog parse_interactions(std::istream& stream, const ParseOptions& opts) {
  std::string line;
  if (!std::getline(stream, line)) throw RuntimeError("missing header: expected '" + std::string(kHeader) + "'");
  if (strip_cr(line) != kHeader) {
    throw RuntimeError("missing or wrong header: expected '" + std::string(kHeader) + "', got '" + strip_cr(line) + "'");
  }

  InteractionLog log;
  std::uint64_t line_no = 1;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::string row = strip_cr(line);
    if (row.empty()) continue;

    std::string f[5];
    const char* bad_column = nullptr;
    std::string detail;
    Interaction it;
    it.line = line_no;

    if (!split5(row, f)) {
      bad_column = "row";
      detail = "expected 5 comma-separated fields";
    } else if (f[0].empty()) {
      bad_column = "student_id";
      detail = "empty";
    } else if (f[1].empty()) {
      bad_column = "question_id";
      detail = "empty";
    } else if (f[3] != "0" && f[3] != "1") {
      bad_column = "correct";
      detail = "expected 0 or 1, got '" + f[3] + "'";
    } else {
      it.student = f[0];
      it.question = f[1];
      it.skill = f[2];
      it.has_skill = !f[2].empty();
      it.correct = static_cast<std::int8_t>(f[3] == "1" ? 1 : 0);
      if (f[4].empty()) {
        it.order_key = static_cast<std::int64_t>(line_no);  // line order is the key
      } else if (!parse_i64(f[4], it.order_key)) {
        bad_column = "timestamp";
        detail = "expected integer or empty, got '" + f[4] + "'";
      }
    }

    if (bad_column) {
      if (opts.lenient) {
        ++log.malformed_rows;
        continue;
      }
      fail_row(line_no, bad_column, detail);
    }
    log.rows.push_back(std::move(it));
  }
  return log;
}

InteractionLog parse_interactions_file(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open '" + path + "'");
  return parse_interactions(in, opts);
}

std::int32_t Vocab::intern(const std::string& external) {
  auto [it, inserted] = index_.try_emplace(external, static_cast<std::int32_t>(names_.size() + 1));
  if (inserted) names_.push_back(external);
  return it->second;
}

std::int32_t Vocab::lookup(const std::string& external) const {
  const auto it = index_.find(external);
  return it == index_.end() ? 0 : it->second;
}

const std::string& Vocab::external(std::int32_t idx) const {
  if (idx < 1 || idx > size()) throw RuntimeError("vocab index out of range: " + std::to_string(idx));
  return names_[static_cast<std::size_t>(idx - 1)];
}

Dataset remap_ids(const InteractionLog& log) {
  if (log.rows.empty()) throw RuntimeError("cannot remap an empty interaction log");

  Dataset ds;
  bool any_no_skill = false;
  for (const auto& it : log.rows) {
    ds.student_vocab.intern(it.student);
    ds.question_vocab.intern(it.question);
    if (it.has_skill) {
      ds.skill_vocab.intern(it.skill);
    } else {
      any_no_skill = true;
    }
  }
  if (any_no_skill) ds.no_skill_idx = ds.skill_vocab.intern("");

  ds.sequences.resize(static_cast<std::size_t>(ds.student_vocab.size()));

  // Per-student stable order: (order_key, input line).
  std::vector<std::vector<const Interaction*>> per_student(ds.sequences.size());
  for (const auto& it : log.rows) {
    const std::int32_t s = ds.student_vocab.lookup(it.student);
    per_student[static_cast<std::size_t>(s - 1)].push_back(&it);
  }
  for (std::size_t s = 0; s < per_student.size(); ++s) {
    auto& items = per_student[s];
    std::stable_sort(items.begin(), items.end(), [](const Interaction* a, const Interaction* b) {
      return a->order_key < b->order_key;
    });
    auto& seq = ds.sequences[s];
    seq.reserve(items.size());
    for (const Interaction* it : items) {
      SeqItem si;
      si.question = ds.question_vocab.lookup(it->question);
      si.skill = it->has_skill ? ds.skill_vocab.lookup(it->skill) : ds.no_skill_idx;
      si.correct = it->correct;
      seq.push_back(si);
    }
  }
  return ds;
}

bool Split::is_train(std::int32_t student) const {
  return std::binary_search(train_students.begin(), train_students.end(), student);
}

Split split_students(const Dataset& dataset, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw UsageError("split ratio must be in (0,1), got " + std::to_string(ratio));
  }
  const std::int32_t n = dataset.n_students();
  if (n < 2) throw RuntimeError("need at least 2 students to split, have " + std::to_string(n));

  std::vector<std::int32_t> order(static_cast<std::size_t>(n));
  for (std::int32_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i + 1;
  Rng rng(seed);
  rng.shuffle(order);

  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  Split split;
  split.seed = seed;
  split.train_students.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_students.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(split.train_students.begin(), split.train_students.end());
  std::sort(split.test_students.begin(), split.test_students.end());
  return split;
}

Stats dataset_stats(const Dataset& dataset) {
  Stats st;
  st.n_students = dataset.n_students();
  st.n_questions = dataset.question_vocab.size();
  st.n_skills = dataset.skill_vocab.size();
  for (const auto& seq : dataset.sequences) st.n_interactions += static_cast<std::int64_t>(seq.size());
  return st;
}

}  // namespace livekt
