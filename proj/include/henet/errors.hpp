#pragma once

#include <stdexcept>
#include <string>

namespace henet {

// Error categories; the CLI maps each to a distinct exit code.

// Structural problems: shape mismatches, divisibility violations, bad configs.
struct BuildError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset parsing problems: missing files, framing errors, bad labels.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite losses or gradients during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model file problems: bad magic, version or checksum mismatch.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace henet
