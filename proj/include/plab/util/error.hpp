#pragma once

#include <stdexcept>
#include <string>

namespace plab {

// Caller broke a documented precondition (bad shape, out-of-range index, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input data cannot support the requested computation (single-class labels,
// empty spans, malformed files, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pipeline-level failures: missing stage dependency, stale cache, divergence.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PLAB_REQUIRE(cond, msg)                                   \
  do {                                                            \
    if (!(cond)) throw ::plab::ContractError(std::string(msg));   \
  } while (false)

}  // namespace plab
