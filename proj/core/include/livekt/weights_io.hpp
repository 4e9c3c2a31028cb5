#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "livekt/baselines.hpp"
#include "livekt/gbdt.hpp"
#include "livekt/minipfn.hpp"

namespace livekt {

// Weights file ("LKTW"): magic, u32 version, model kind tag, metadata block
// (canonical JSON), named float32 tensors, CRC32 checksum. Layout is fixed;
// writing the same container twice is byte-identical.
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;  // row-major
};

struct WeightsContainer {
  std::string kind;
  std::string metadata_json;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  const NamedTensor& require(const std::string& name) const;
};

void save_weights_container(const WeightsContainer& container, const std::string& path);
WeightsContainer load_weights_container(const std::string& path);

// minipfn adapters; config travels in the metadata block.
WeightsContainer minipfn_to_container(const MiniPFNWeights& weights,
                                      const std::string& kind = "minipfn");
MiniPFNWeights minipfn_from_container(const WeightsContainer& container);

MiniPFNWeights load_minipfn_weights(const std::string& path);
void save_minipfn_weights(const MiniPFNWeights& weights, const std::string& path);

std::string minipfn_config_to_json(const MiniPFNConfig& config);
MiniPFNConfig minipfn_config_from_json(const std::string& json_text);

// LR and GBDT models share the same container format (kinds "lr", "gbdt").
WeightsContainer lr_to_container(const LRWeights& weights, const LRParams& params);
std::pair<LRWeights, LRParams> lr_from_container(const WeightsContainer& container);

WeightsContainer gbdt_to_container(const Ensemble& ensemble);
Ensemble gbdt_from_container(const WeightsContainer& container);

}  // namespace livekt
