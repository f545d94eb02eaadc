#pragma once

#include <stdexcept>

namespace placerec {

// Bad configuration or usage. CLI exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or malformed input data. CLI exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure (divergence, singular system). CLI exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace placerec
