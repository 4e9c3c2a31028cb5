#pragma once

// Shared binary envelope for the dataset and weights containers:
//   [magic: 4 bytes][version: u32 LE][body][crc32(body): u32 LE]
// The CRC covers every body byte and is verified before any parsing, so a
// flipped byte anywhere is rejected with a checksum, magic or version error.

#include <cstdint>
#include <string>
#include <vector>

#include "livekt/error.hpp"

namespace livekt::detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v);
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void f32_array(const float* data, std::size_t n);

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string str();
  void f32_array(float* out, std::size_t n);
  bool done() const { return pos_ == size_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw RuntimeError("container truncated or corrupt: body too short");
  }
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_envelope(const std::string& path, const char magic[4], std::uint32_t version,
                    const std::string& body);

// Validates magic, version and checksum, returns the body bytes.
std::string read_envelope(const std::string& path, const char magic[4],
                          std::uint32_t expect_version);

bool file_has_magic(const std::string& path, const char magic[4]);

}  // namespace livekt::detail
