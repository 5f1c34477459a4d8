#pragma once

#include <stdexcept>
#include <string>

namespace urbanvae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad caller input: out-of-range parameters, duplicate ids, K > N, ...
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Unknown or inconsistent configuration value (e.g. coordinate mode).
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Tensor shapes that do not fit the layer they are fed to.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. The message names the offending line or feature.
class ParseError : public IoError {
 public:
  using IoError::IoError;
};

/// Checkpoint manifest and blob disagree (shape, count, size or digest).
class CorruptArtifactError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace urbanvae
