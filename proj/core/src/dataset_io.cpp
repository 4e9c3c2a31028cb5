#include "livekt/dataset_io.hpp"

#include "livekt/detail/container.hpp"
#include "livekt/error.hpp"

namespace livekt {

namespace {

constexpr char kDatasetMagic[4] = {'L', 'K', 'T', 'D'};

void write_vocab(detail::ByteWriter& w, const Vocab& vocab) {
  w.u32(static_cast<std::uint32_t>(vocab.size()));
  for (std::int32_t i = 1; i <= vocab.size(); ++i) w.str(vocab.external(i));
}

Vocab read_vocab(detail::ByteReader& r) {
  Vocab vocab;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = r.str();
    vocab.intern(name);
  }
  if (static_cast<std::uint32_t>(vocab.size()) != n) {
    throw RuntimeError("dataset container: duplicate vocab entries");
  }
  return vocab;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
  detail::ByteWriter w;
  write_vocab(w, dataset.student_vocab);
  write_vocab(w, dataset.question_vocab);
  write_vocab(w, dataset.skill_vocab);
  w.u32(static_cast<std::uint32_t>(dataset.no_skill_idx));
  w.u32(static_cast<std::uint32_t>(dataset.sequences.size()));
  for (const auto& seq : dataset.sequences) {
    w.u32(static_cast<std::uint32_t>(seq.size()));
    for (const auto& item : seq) {
      w.u32(static_cast<std::uint32_t>(item.question));
      w.u32(static_cast<std::uint32_t>(item.skill));
      w.u8(static_cast<std::uint8_t>(item.correct));
    }
  }
  detail::write_envelope(path, kDatasetMagic, kDatasetFormatVersion, w.bytes());
}

Dataset load_dataset(const std::string& path) {
  const std::string body = detail::read_envelope(path, kDatasetMagic, kDatasetFormatVersion);
  detail::ByteReader r(body.data(), body.size());

  Dataset ds;
  ds.student_vocab = read_vocab(r);
  ds.question_vocab = read_vocab(r);
  ds.skill_vocab = read_vocab(r);
  ds.no_skill_idx = static_cast<std::int32_t>(r.u32());
  if (ds.no_skill_idx < 0 || ds.no_skill_idx > ds.skill_vocab.size()) {
    throw RuntimeError("dataset container: no-skill index out of range");
  }

  const std::uint32_t n_students = r.u32();
  if (n_students != static_cast<std::uint32_t>(ds.student_vocab.size())) {
    throw RuntimeError("dataset container: sequence count does not match student vocab");
  }
  ds.sequences.resize(n_students);
  for (std::uint32_t s = 0; s < n_students; ++s) {
    const std::uint32_t len = r.u32();
    if (len == 0) throw RuntimeError("dataset container: empty student sequence");
    if (static_cast<std::uint64_t>(len) * 9 > r.remaining()) {
      throw RuntimeError("dataset container: sequence overruns body");
    }
    auto& seq = ds.sequences[s];
    seq.resize(len);
    for (auto& item : seq) {
      item.question = static_cast<std::int32_t>(r.u32());
      item.skill = static_cast<std::int32_t>(r.u32());
      item.correct = static_cast<std::int8_t>(r.u8());
      if (item.question < 1 || item.question > ds.question_vocab.size()) {
        throw RuntimeError("dataset container: question index out of vocab range");
      }
      if (item.skill < 1 || item.skill > ds.skill_vocab.size()) {
        throw RuntimeError("dataset container: skill index out of vocab range");
      }
      if (item.correct != 0 && item.correct != 1) {
        throw RuntimeError("dataset container: correctness must be 0 or 1");
      }
    }
  }
  if (!r.done()) throw RuntimeError("dataset container: trailing bytes");
  return ds;
}

bool is_dataset_file(const std::string& path) {
  return detail::file_has_magic(path, kDatasetMagic);
}

}  // namespace livekt
