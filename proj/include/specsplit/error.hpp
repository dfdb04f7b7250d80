#pragma once

#include <stdexcept>
#include <string>

namespace specsplit {

/// Base of every error thrown by the library. The CLI maps subclasses onto
/// process exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed container magic, header, or unsupported image encoding.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Payload shorter than its header promises.
class TruncationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise invalid sample values.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Incompatible dimensions between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid scalar argument (factor, size, sigma, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A metric whose value is mathematically undefined for the given input.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace specsplit
