#include "livekt/weights_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>
#include <zlib.h>

#include "livekt/detail/container.hpp"
#include "livekt/detail/minipfn_engine.hpp"
#include "livekt/error.hpp"

namespace livekt {

namespace detail {

void ByteWriter::f32(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  u32(bits);
}

void ByteWriter::f32_array(const float* data, std::size_t n) {
  // Little-endian hosts can take the fast path; the loop is the fallback.
  if constexpr (std::endian::native == std::endian::little) {
    buf_.append(reinterpret_cast<const char*>(data), n * 4);
  } else {
    for (std::size_t i = 0; i < n; ++i) f32(data[i]);
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  return v;
}

float ByteReader::f32() {
  const std::uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  if (n > remaining()) throw RuntimeError("container truncated or corrupt: bad string length");
  std::string s(data_ + pos_, n);
  pos_ += n;
  return s;
}

void ByteReader::f32_array(float* out, std::size_t n) {
  need(n * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out, data_ + pos_, n * 4);
    pos_ += n * 4;
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f32();
  }
}

namespace {

std::uint32_t crc32_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
  return v;
}

}  // namespace

void write_envelope(const std::string& path, const char magic[4], std::uint32_t version,
                    const std::string& body) {
  std::string out;
  out.reserve(body.size() + 12);
  out.append(magic, 4);
  put_u32_le(out, version);
  out.append(body);
  put_u32_le(out, crc32_of(body));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw RuntimeError("cannot write '" + tmp + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw RuntimeError("short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw RuntimeError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

std::string read_envelope(const std::string& path, const char magic[4],
                          std::uint32_t expect_version) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot open '" + path + "'");
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (raw.size() < 12) throw RuntimeError("'" + path + "': file too short to be a container");

  if (std::memcmp(raw.data(), magic, 4) != 0) {
    throw RuntimeError("'" + path + "': bad magic '" + raw.substr(0, 4) + "', expected '" +
                       std::string(magic, 4) + "'");
  }
  const std::uint32_t version = get_u32_le(raw.data() + 4);
  if (version != expect_version) {
    throw RuntimeError("'" + path + "': unsupported format version " + std::to_string(version) +
                       ", expected " + std::to_string(expect_version));
  }
  const std::string body = raw.substr(8, raw.size() - 12);
  const std::uint32_t stored = get_u32_le(raw.data() + raw.size() - 4);
  if (stored != crc32_of(body)) {
    throw RuntimeError("'" + path + "': checksum mismatch, file is corrupt");
  }
  return body;
}

bool file_has_magic(const std::string& path, const char magic[4]) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  char head[4] = {0, 0, 0, 0};
  f.read(head, 4);
  return f.gcount() == 4 && std::memcmp(head, magic, 4) == 0;
}

}  // namespace detail

namespace {
constexpr char kWeightsMagic[4] = {'L', 'K', 'T', 'W'};
}

const NamedTensor* WeightsContainer::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& WeightsContainer::require(const std::string& name) const {
  const NamedTensor* t = find(name);
  if (!t) throw RuntimeError("weights container: missing tensor '" + name + "'");
  return *t;
}

void save_weights_container(const WeightsContainer& container, const std::string& path) {
  detail::ByteWriter w;
  w.str(container.kind);
  w.u64(container.metadata_json.size());
  std::string body = w.bytes();
  body.append(container.metadata_json);

  detail::ByteWriter tw;
  tw.u32(static_cast<std::uint32_t>(container.tensors.size()));
  for (const auto& t : container.tensors) {
    tw.str(t.name);
    tw.u32(static_cast<std::uint32_t>(t.shape.size()));
    std::uint64_t numel = 1;
    for (const auto dim : t.shape) {
      tw.u64(dim);
      numel *= dim;
    }
    if (numel != t.data.size()) {
      throw RuntimeError("tensor '" + t.name + "': shape/data mismatch");
    }
    tw.f32_array(t.data.data(), t.data.size());
  }
  body.append(tw.bytes());

  detail::write_envelope(path, kWeightsMagic, kWeightsFormatVersion, body);
}

WeightsContainer load_weights_container(const std::string& path) {
  const std::string body = detail::read_envelope(path, kWeightsMagic, kWeightsFormatVersion);
  detail::ByteReader r(body.data(), body.size());

  WeightsContainer c;
  c.kind = r.str();
  const std::uint64_t meta_len = r.u64();
  if (meta_len > r.remaining()) throw RuntimeError("weights container: bad metadata length");
  c.metadata_json.resize(meta_len);
  for (std::uint64_t i = 0; i < meta_len; ++i) c.metadata_json[i] = static_cast<char>(r.u8());

  const std::uint32_t count = r.u32();
  c.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw RuntimeError("weights container: implausible tensor rank");
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      const std::uint64_t dim = r.u64();
      t.shape.push_back(dim);
      numel *= dim;
    }
    if (numel * 4 > r.remaining()) throw RuntimeError("weights container: tensor data overruns body");
    t.data.resize(numel);
    r.f32_array(t.data.data(), numel);
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw RuntimeError("weights container: trailing bytes after tensors");
  return c;
}

std::string minipfn_config_to_json(const MiniPFNConfig& config) {
  nlohmann::json j;
  j["d_model"] = config.d_model;
  j["n_heads"] = config.n_heads;
  j["n_blocks"] = config.n_blocks;
  j["d_ff"] = config.d_ff;
  j["max_features"] = config.max_features;
  j["max_offsets"] = config.max_offsets;
  j["value_hash_seed"] = config.value_hash_seed;
  j["dropout"] = config.dropout;
  return j.dump();
}

MiniPFNConfig minipfn_config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeError(std::string("weights metadata is not valid JSON: ") + e.what());
  }
  MiniPFNConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_blocks = j.at("n_blocks").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_features = j.at("max_features").get<int>();
  c.max_offsets = j.at("max_offsets").get<int>();
  c.value_hash_seed = j.at("value_hash_seed").get<std::uint64_t>();
  c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

WeightsContainer minipfn_to_container(const MiniPFNWeights& weights, const std::string& kind) {
  WeightsContainer c;
  c.kind = kind;
  c.metadata_json = minipfn_config_to_json(weights.config);
  livekt::detail::for_each_tensor(const_cast<MiniPFNWeights&>(weights),
                                  [&](const std::string& name, const Eigen::MatrixXf& m) {
                                    NamedTensor t;
                                    t.name = name;
                                    t.shape = {static_cast<std::uint64_t>(m.rows()),
                                               static_cast<std::uint64_t>(m.cols())};
                                    t.data.resize(static_cast<std::size_t>(m.size()));
                                    // row-major on disk
                                    Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                                             Eigen::RowMajor>>(
                                        t.data.data(), m.rows(), m.cols()) = m;
                                    c.tensors.push_back(std::move(t));
                                  });
  return c;
}

MiniPFNWeights minipfn_from_container(const WeightsContainer& container) {
  const MiniPFNConfig config = minipfn_config_from_json(container.metadata_json);
  MiniPFNWeights w = init_weights<float>(config, 0);
  livekt::detail::for_each_tensor(w, [&](const std::string& name, Eigen::MatrixXf& m) {
    const NamedTensor& t = container.require(name);
    if (t.shape.size() != 2 || static_cast<Eigen::Index>(t.shape[0]) != m.rows() ||
        static_cast<Eigen::Index>(t.shape[1]) != m.cols()) {
      throw RuntimeError("weights container: tensor '" + name + "' has wrong shape");
    }
    m = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        t.data.data(), m.rows(), m.cols());
  });
  return w;
}

MiniPFNWeights load_minipfn_weights(const std::string& path) {
  const WeightsContainer c = load_weights_container(path);
  if (c.kind != "minipfn" && c.kind != "minipfn_checkpoint") {
    throw RuntimeError("'" + path + "': expected minipfn weights, found kind '" + c.kind + "'");
  }
  return minipfn_from_container(c);
}

void save_minipfn_weights(const MiniPFNWeights& weights, const std::string& path) {
  save_weights_container(minipfn_to_container(weights), path);
}

namespace {

NamedTensor vec_tensor(const std::string& name, std::vector<float> v) {
  NamedTensor t;
  t.name = name;
  t.shape = {v.size()};
  t.data = std::move(v);
  return t;
}

// Doubles round-trip exactly as four 16-bit chunks (each exact in f32).
void push_double_bits(std::vector<float>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 3; i >= 0; --i) {
    out.push_back(static_cast<float>((bits >> (16 * i)) & 0xffffULL));
  }
}

double pull_double_bits(const std::vector<float>& in, std::size_t idx) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits = (bits << 16) | (static_cast<std::uint64_t>(in.at(idx * 4 + static_cast<std::size_t>(i))) & 0xffffULL);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

WeightsContainer lr_to_container(const LRWeights& weights, const LRParams& params) {
  WeightsContainer c;
  c.kind = "lr";
  nlohmann::json j;
  j["learning_rate"] = params.learning_rate;
  j["epochs"] = params.epochs;
  j["l2"] = params.l2;
  j["dim"] = params.dim;
  j["seed"] = params.seed;
  j["warm_start"] = params.warm_start;
  j["bias"] = weights.bias;
  j["step"] = weights.step;
  j["epoch"] = weights.epoch;
  c.metadata_json = j.dump();
  c.tensors.push_back(vec_tensor("w", weights.materialize()));
  return c;
}

std::pair<LRWeights, LRParams> lr_from_container(const WeightsContainer& container) {
  if (container.kind != "lr") {
    throw RuntimeError("expected lr container, found kind '" + container.kind + "'");
  }
  nlohmann::json j = nlohmann::json::parse(container.metadata_json);
  LRParams p;
  p.learning_rate = j.at("learning_rate").get<double>();
  p.epochs = j.at("epochs").get<int>();
  p.l2 = j.at("l2").get<double>();
  p.dim = j.at("dim").get<std::uint32_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.warm_start = j.at("warm_start").get<bool>();

  LRWeights w;
  w.v = container.require("w").data;
  w.scale = 1.0;
  w.bias = j.at("bias").get<double>();
  w.step = j.at("step").get<std::uint64_t>();
  w.epoch = j.at("epoch").get<std::uint64_t>();
  if (w.v.size() != p.dim) throw RuntimeError("lr container: weight vector size mismatch");
  return {std::move(w), p};
}

WeightsContainer gbdt_to_container(const Ensemble& ensemble) {
  WeightsContainer c;
  c.kind = "gbdt";
  const GBDTParams& p = ensemble.params;
  nlohmann::json j;
  j["n_trees"] = p.n_trees;
  j["max_depth"] = p.max_depth;
  j["learning_rate"] = p.learning_rate;
  j["min_samples_leaf"] = p.min_samples_leaf;
  j["lambda_l2"] = p.lambda_l2;
  j["max_bins"] = p.max_bins;
  j["seed"] = p.seed;
  j["base_score"] = ensemble.base_score;
  c.metadata_json = j.dump();

  // Trees flattened into parallel arrays; node boundaries via tree_offsets.
  // Leaf values are doubles, stored as exact 16-bit chunks.
  std::vector<float> tree_offsets{0.0f};
  std::vector<float> feature, left, right, value_bits, mask_offsets{0.0f}, mask_bits;
  for (const auto& tree : ensemble.trees) {
    for (const auto& node : tree.nodes) {
      feature.push_back(static_cast<float>(node.feature));
      left.push_back(static_cast<float>(node.left));
      right.push_back(static_cast<float>(node.right));
      push_double_bits(value_bits, node.value);
      for (const auto bit : node.left_bins) mask_bits.push_back(static_cast<float>(bit));
      mask_offsets.push_back(static_cast<float>(mask_bits.size()));
    }
    tree_offsets.push_back(static_cast<float>(feature.size()));
  }
  c.tensors.push_back(vec_tensor("tree_offsets", std::move(tree_offsets)));
  c.tensors.push_back(vec_tensor("node_feature", std::move(feature)));
  c.tensors.push_back(vec_tensor("node_left", std::move(left)));
  c.tensors.push_back(vec_tensor("node_right", std::move(right)));
  c.tensors.push_back(vec_tensor("node_value_bits", std::move(value_bits)));
  c.tensors.push_back(vec_tensor("node_mask_offsets", std::move(mask_offsets)));
  c.tensors.push_back(vec_tensor("node_mask_bits", std::move(mask_bits)));

  std::vector<float> n_bins, overflow, map_offsets{0.0f}, map_bins;
  for (std::size_t f = 0; f < ensemble.bins.code_to_bin.size(); ++f) {
    n_bins.push_back(static_cast<float>(ensemble.bins.n_bins[f]));
    overflow.push_back(static_cast<float>(ensemble.bins.overflow_bin[f]));
    for (const auto b : ensemble.bins.code_to_bin[f]) map_bins.push_back(static_cast<float>(b));
    map_offsets.push_back(static_cast<float>(map_bins.size()));
  }
  c.tensors.push_back(vec_tensor("bin_counts", std::move(n_bins)));
  c.tensors.push_back(vec_tensor("bin_overflow", std::move(overflow)));
  c.tensors.push_back(vec_tensor("bin_map_offsets", std::move(map_offsets)));
  c.tensors.push_back(vec_tensor("bin_map", std::move(map_bins)));

  std::vector<float> base_bits;
  push_double_bits(base_bits, ensemble.base_score);
  c.tensors.push_back(vec_tensor("base_score_bits", std::move(base_bits)));
  return c;
}

Ensemble gbdt_from_container(const WeightsContainer& container) {
  if (container.kind != "gbdt") {
    throw RuntimeError("expected gbdt container, found kind '" + container.kind + "'");
  }
  nlohmann::json j = nlohmann::json::parse(container.metadata_json);
  Ensemble e;
  e.params.n_trees = j.at("n_trees").get<int>();
  e.params.max_depth = j.at("max_depth").get<int>();
  e.params.learning_rate = j.at("learning_rate").get<double>();
  e.params.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  e.params.lambda_l2 = j.at("lambda_l2").get<double>();
  e.params.max_bins = j.at("max_bins").get<int>();
  e.params.seed = j.at("seed").get<std::uint64_t>();

  e.base_score = pull_double_bits(container.require("base_score_bits").data, 0);

  const auto& tree_offsets = container.require("tree_offsets").data;
  const auto& feature = container.require("node_feature").data;
  const auto& left = container.require("node_left").data;
  const auto& right = container.require("node_right").data;
  const auto& value_bits = container.require("node_value_bits").data;
  const auto& mask_offsets = container.require("node_mask_offsets").data;
  const auto& mask_bits = container.require("node_mask_bits").data;

  for (std::size_t t = 0; t + 1 < tree_offsets.size(); ++t) {
    Tree tree;
    const auto begin = static_cast<std::size_t>(tree_offsets[t]);
    const auto end = static_cast<std::size_t>(tree_offsets[t + 1]);
    if (end > feature.size() || begin > end) throw RuntimeError("gbdt container: bad tree offsets");
    for (std::size_t n = begin; n < end; ++n) {
      TreeNode node;
      node.feature = static_cast<std::int32_t>(feature[n]);
      node.left = static_cast<std::int32_t>(left[n]);
      node.right = static_cast<std::int32_t>(right[n]);
      node.value = pull_double_bits(value_bits, n);
      const auto mb = static_cast<std::size_t>(mask_offsets.at(n));
      const auto me = static_cast<std::size_t>(mask_offsets.at(n + 1));
      if (me > mask_bits.size() || mb > me) throw RuntimeError("gbdt container: bad mask offsets");
      node.left_bins.reserve(me - mb);
      for (std::size_t i = mb; i < me; ++i) node.left_bins.push_back(static_cast<std::uint8_t>(mask_bits[i]));
      tree.nodes.push_back(std::move(node));
    }
    e.trees.push_back(std::move(tree));
  }

  const auto& n_bins = container.require("bin_counts").data;
  const auto& overflow = container.require("bin_overflow").data;
  const auto& map_offsets = container.require("bin_map_offsets").data;
  const auto& map_bins = container.require("bin_map").data;
  for (std::size_t f = 0; f < n_bins.size(); ++f) {
    e.bins.n_bins.push_back(static_cast<std::uint16_t>(n_bins[f]));
    e.bins.overflow_bin.push_back(static_cast<std::uint8_t>(overflow[f]));
    const auto mb = static_cast<std::size_t>(map_offsets.at(f));
    const auto me = static_cast<std::size_t>(map_offsets.at(f + 1));
    if (me > map_bins.size() || mb > me) throw RuntimeError("gbdt container: bad bin map offsets");
    std::vector<std::uint8_t> map;
    map.reserve(me - mb);
    for (std::size_t i = mb; i < me; ++i) map.push_back(static_cast<std::uint8_t>(map_bins[i]));
    e.bins.code_to_bin.push_back(std::move(map));
  }
  return e;
}

}  // namespace livekt
