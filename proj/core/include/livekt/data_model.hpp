#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

namespace livekt {

// Dense index 0 is reserved as PAD in every vocabulary; real IDs start at 1.
inline constexpr std::int32_t kPad = 0;

// One graded attempt as it appears in the raw export, before ID remapping.
struct Interaction {
  std::string student;
  std::string question;
  std::string skill;  // meaningful only when has_skill
  bool has_skill = false;
  std::int8_t correct = 0;  // 0 or 1
  std::int64_t order_key = 0;
  std::uint64_t line = 0;  // 1-based input line, tie-breaker for order_key
};

struct InteractionLog {
  std::vector<Interaction> rows;
  std::uint64_t malformed_rows = 0;  // skipped rows (lenient parsing only)
};

struct ParseOptions {
  // Strict parsing throws on the first malformed row. Lenient parsing skips
  // malformed rows, counting them, so real-world exports with a few broken
  // lines still load; students whose every row was malformed simply drop out.
  bool lenient = false;
};

// Expected header: student_id,question_id,skill_id,correct,timestamp
InteractionLog parse_interactions(std::istream& stream, const ParseOptions& opts = {});
InteractionLog parse_interactions_file(const std::string& path, const ParseOptions& opts = {});

// Bijection external ID <-> dense index. Index 0 is PAD and has no entry;
// dense indices run 1..size().
class Vocab {
 public:
  std::int32_t intern(const std::string& external);       // inserts if new
  std::int32_t lookup(const std::string& external) const;  // 0 if unknown
  const std::string& external(std::int32_t idx) const;
  std::int32_t size() const { return static_cast<std::int32_t>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct SeqItem {
  std::int32_t question = 0;
  std::int32_t skill = 0;
  std::int8_t correct = 0;
};

struct Dataset {
  // sequences[i] belongs to dense student index i+1; sorted by order key.
  std::vector<std::vector<SeqItem>> sequences;
  Vocab question_vocab;
  Vocab skill_vocab;
  Vocab student_vocab;
  // Dense skill index used for interactions without a skill ID; 0 when every
  // interaction carried one. Always the last skill vocab entry when present.
  std::int32_t no_skill_idx = 0;

  std::int32_t n_students() const { return static_cast<std::int32_t>(sequences.size()); }
};

Dataset remap_ids(const InteractionLog& log);

struct Split {
  std::vector<std::int32_t> train_students;  // sorted dense indices
  std::vector<std::int32_t> test_students;   // sorted dense indices
  std::uint64_t seed = 0;

  bool is_train(std::int32_t student) const;
};

Split split_students(const Dataset& dataset, double ratio, std::uint64_t seed);

struct Stats {
  std::int64_t n_students = 0;
  std::int64_t n_questions = 0;
  std::int64_t n_skills = 0;
  std::int64_t n_interactions = 0;
};

Stats dataset_stats(const Dataset& dataset);

}  // namespace livekt
