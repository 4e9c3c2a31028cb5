#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "livekt/encoding.hpp"

namespace livekt {

// Uniform contract over every model family. Fitted models do their work in
// prepare(); in-context models keep it a no-op and consume the train table at
// predict time.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::string name() const = 0;
  virtual bool is_in_context() const = 0;

  virtual void prepare(const EncodedTable& train) = 0;

  // One probability of label=1 per test row. Must never read test labels.
  virtual std::vector<double> predict(const EncodedTable& train, const EncodedTable& test) = 0;

  // Training passes reported in eval output; 1 for in-context / single-pass.
  virtual int epochs() const { return 1; }

  // Re-derives any internal seed so repeated harness runs are reproducible.
  virtual void reseed(std::uint64_t /*seed*/) {}
};

}  // namespace livekt
