#pragma once

#include <stdexcept>
#include <string>

namespace tricue {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated a documented precondition (bad sizes, empty input, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Two operands disagree in dimension or grid shape.
class DimensionError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Data violates a type invariant (non-finite entries, grid/N mismatch, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk content (NPY header, manifest, PNG).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A model could not be fitted from the supplied samples.
class FitError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration; the CLI maps this to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tricue
