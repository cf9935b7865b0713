#pragma once

#include <stdexcept>
#include <string>

namespace relex {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor dimension / shape violations.
struct ShapeError : Error {
  using Error::Error;
};

// Bad configuration values (sizes, flags, hyperparameters).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input files (vocab, TSV, spans).
struct ParseError : Error {
  using Error::Error;
};

// Checkpoint container problems (corruption, mismatched config).
struct CheckpointError : Error {
  using Error::Error;
};

// Divergence or non-finite values during optimization.
struct TrainingError : Error {
  using Error::Error;
};

// Invalid runtime inputs (out-of-range index, degenerate mask, unknown label).
struct InputError : Error {
  using Error::Error;
};

}  // namespace relex
