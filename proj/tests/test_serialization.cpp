#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "livekt/dataset_io.hpp"
#include "livekt/error.hpp"
#include "livekt/gbdt.hpp"
#include "livekt/rng.hpp"
#include "livekt/weights_io.hpp"
#include "support.hpp"

using namespace livekt;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

WeightsContainer sample_container() {
  WeightsContainer c;
  c.kind = "minipfn";
  c.metadata_json = minipfn_config_to_json(MiniPFNConfig{});
  NamedTensor t;
  t.name = "example";
  t.shape = {2, 3};
  t.data = {1.0f, -2.5f, 0.0f, 3.25f, 1e-20f, 7.0f};
  c.tensors.push_back(t);
  return c;
}

}  // namespace

TEST_CASE("weights container round-trips bitwise") {
  const std::string path = temp_path("livekt_w.lktw");
  const WeightsContainer c = sample_container();
  save_weights_container(c, path);
  const std::string bytes1 = read_bytes(path);

  const WeightsContainer loaded = load_weights_container(path);
  CHECK(loaded.kind == c.kind);
  CHECK(loaded.metadata_json == c.metadata_json);
  REQUIRE(loaded.tensors.size() == 1);
  CHECK(loaded.tensors[0].shape == c.tensors[0].shape);
  CHECK(loaded.tensors[0].data == c.tensors[0].data);

  save_weights_container(loaded, path);
  CHECK(read_bytes(path) == bytes1);  // byte-identical re-save
  std::remove(path.c_str());
}

TEST_CASE("wrong magic is reported by name") {
  const std::string path = temp_path("livekt_magic.lktw");
  save_weights_container(sample_container(), path);
  std::string bytes = read_bytes(path);
  bytes[0] = 'X';
  bytes[1] = 'X';
  bytes[2] = 'X';
  bytes[3] = 'X';
  write_bytes(path, bytes);
  CHECK_THROWS_WITH_AS(load_weights_container(path), doctest::Contains("XXXX"), RuntimeError);
  std::remove(path.c_str());
}

TEST_CASE("flipped payload bytes always fail the checksum") {
  const std::string path = temp_path("livekt_corrupt.lktw");
  save_weights_container(sample_container(), path);
  const std::string clean = read_bytes(path);

  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::string bytes = clean;
    const auto pos = static_cast<std::size_t>(rng.below(bytes.size()));
    const auto flip = static_cast<char>(1 + rng.below(255));
    bytes[pos] = static_cast<char>(bytes[pos] ^ flip);
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_weights_container(path), RuntimeError);
  }
  std::remove(path.c_str());
}

TEST_CASE("version mismatch is an explicit error") {
  const std::string path = temp_path("livekt_version.lktw");
  save_weights_container(sample_container(), path);
  std::string bytes = read_bytes(path);
  bytes[4] = 9;  // version low byte
  write_bytes(path, bytes);
  CHECK_THROWS_WITH_AS(load_weights_container(path), doctest::Contains("version"), RuntimeError);
  std::remove(path.c_str());
}

TEST_CASE("minipfn weights survive the container round trip bit for bit") {
  MiniPFNConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_blocks = 2;
  cfg.d_ff = 24;
  cfg.max_offsets = 8;
  const MiniPFNWeights w = init_weights<float>(cfg, 77);
  const std::string path = temp_path("livekt_mpfn.lktw");
  save_minipfn_weights(w, path);
  const MiniPFNWeights loaded = load_minipfn_weights(path);
  CHECK(loaded.config.d_model == 16);
  CHECK((loaded.value_mix - w.value_mix).norm() == 0.0f);
  CHECK((loaded.blocks[1].ff_w1 - w.blocks[1].ff_w1).norm() == 0.0f);
  CHECK((loaded.pos_emb - w.pos_emb).norm() == 0.0f);
  std::remove(path.c_str());
}

TEST_CASE("dataset container round-trips and validates") {
  const Dataset ds = test::make_random_dataset(25, 8, 5);
  const std::string path = temp_path("livekt_ds.lktd");
  save_dataset(ds, path);
  CHECK(is_dataset_file(path));
  const std::string bytes1 = read_bytes(path);

  const Dataset loaded = load_dataset(path);
  CHECK(loaded.n_students() == ds.n_students());
  CHECK(loaded.no_skill_idx == ds.no_skill_idx);
  CHECK(loaded.question_vocab.size() == ds.question_vocab.size());
  for (std::int32_t s = 1; s <= ds.n_students(); ++s) {
    CHECK(loaded.student_vocab.external(s) == ds.student_vocab.external(s));
    const auto& a = ds.sequences[static_cast<std::size_t>(s - 1)];
    const auto& b = loaded.sequences[static_cast<std::size_t>(s - 1)];
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].question == b[i].question);
      CHECK(a[i].skill == b[i].skill);
      CHECK(a[i].correct == b[i].correct);
    }
  }

  save_dataset(loaded, path);
  CHECK(read_bytes(path) == bytes1);
  std::remove(path.c_str());
}

TEST_CASE("dataset corruption fuzz: flipped bytes are always rejected") {
  const Dataset ds = test::make_random_dataset(10, 6, 6);
  const std::string path = temp_path("livekt_ds_fuzz.lktd");
  save_dataset(ds, path);
  const std::string clean = read_bytes(path);

  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    std::string bytes = clean;
    const auto pos = static_cast<std::size_t>(rng.below(bytes.size()));
    bytes[pos] = static_cast<char>(bytes[pos] ^ static_cast<char>(1 + rng.below(255)));
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_dataset(path), RuntimeError);
  }
  std::remove(path.c_str());
}

TEST_CASE("lr weights round-trip through the common container") {
  LRWeights w;
  w.v = {0.5f, -1.5f, 0.0f, 2.25f};
  w.scale = 0.75;
  w.bias = -0.125;
  w.step = 42;
  w.epoch = 3;
  LRParams p;
  p.dim = 4;
  p.epochs = 5;

  const WeightsContainer c = lr_to_container(w, p);
  CHECK(c.kind == "lr");
  const auto [loaded, params] = lr_from_container(c);
  CHECK(params.epochs == 5);
  CHECK(loaded.bias == w.bias);
  CHECK(loaded.step == 42);
  // materialized: scale folded into the stored vector
  const auto expected = w.materialize();
  CHECK(loaded.v == expected);
  CHECK(loaded.scale == 1.0);
}

TEST_CASE("gbdt ensembles round-trip through the common container") {
  const Dataset ds = test::make_rasch_dataset({.n_students = 60, .seq_len = 8, .seed = 31});
  const Split split = split_students(ds, 0.8, 1);
  const TablePair tables = build_tables(ds, split, 5, 5, 4);
  GBDTParams params;
  params.n_trees = 6;
  params.min_samples_leaf = 4;
  const Ensemble ens = gbdt_fit(tables.train, params);

  const Ensemble loaded = gbdt_from_container(gbdt_to_container(ens));
  CHECK(loaded.base_score == ens.base_score);
  REQUIRE(loaded.trees.size() == ens.trees.size());
  const auto a = gbdt_predict(ens, tables.test);
  const auto b = gbdt_predict(loaded, tables.test);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);  // bitwise
}

TEST_CASE("loading a dataset container as weights fails on magic") {
  const Dataset ds = test::make_random_dataset(5, 4, 7);
  const std::string path = temp_path("livekt_cross.lktd");
  save_dataset(ds, path);
  CHECK_THROWS_WITH_AS(load_weights_container(path), doctest::Contains("magic"), RuntimeError);
  std::remove(path.c_str());
}
