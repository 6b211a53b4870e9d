#pragma once

#include <stdexcept>
#include <string>

namespace ginv {

// Structural misuse: bad shapes, bad arguments, malformed configs.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric domain violations: log of non-positive values, zero weight norms.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss encountered during a training run.
struct DivergenceError : std::runtime_error {
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error("divergence at step " + std::to_string(step) + ": " + what),
        step(step) {}
  std::size_t step;
};

// Image / checkpoint I/O failures, one class per documented failure mode.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FileMissingError : IoError {
  using IoError::IoError;
};
struct FormatError : IoError {
  using IoError::IoError;
};
struct CorruptFileError : IoError {
  using IoError::IoError;
};
struct BadMagicError : CorruptFileError {
  using CorruptFileError::CorruptFileError;
};
struct VersionError : CorruptFileError {
  using CorruptFileError::CorruptFileError;
};
struct TruncatedFileError : CorruptFileError {
  using CorruptFileError::CorruptFileError;
};
struct DuplicateNameError : CorruptFileError {
  using CorruptFileError::CorruptFileError;
};

}  // namespace ginv
