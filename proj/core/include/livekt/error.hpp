#pragma once

#include <stdexcept>
#include <string>

namespace livekt {

// Runtime failure (bad data, numeric blowup, I/O). CLI maps this to exit 1.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller/config mistake (bad flag value, unknown model, bad ratio). Exit 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace livekt
