#pragma once

#include <stdexcept>
#include <string>

namespace ias {

// Invalid configuration (world config, train config, experiment spec).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset assembly or dataset file problems.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape / domain violations at a module boundary.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct EncodingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DecodingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or other optimisation failure.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PlotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

}  // namespace ias
