#pragma once

#include <string>

#include "livekt/data_model.hpp"

namespace livekt {

// Dataset file ("LKTD"): magic, u32 version, vocab tables in dense order,
// no-skill index, per-student sequences, CRC32 checksum.
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// Magic sniff so the CLI can accept either the binary container or raw CSV.
bool is_dataset_file(const std::string& path);

}  // namespace livekt
