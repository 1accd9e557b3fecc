#pragma once

#include <stdexcept>
#include <string>

namespace clr {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not satisfy an operation's contract.
struct ShapeError : Error {
  using Error::Error;
};

/// An object is in the wrong state for the requested operation
/// (e.g. training a frozen backbone, evaluating norm stats that were
/// never recorded, registering a duplicate task).
struct StateError : Error {
  using Error::Error;
};

/// An architecture or adapter description is internally inconsistent.
struct SpecError : Error {
  using Error::Error;
};

/// Dataset contents violate a contract (labels out of range, unknown class).
struct DataError : Error {
  using Error::Error;
};

/// A file does not conform to its binary or textual format.
struct FormatError : Error {
  using Error::Error;
};

/// A numeric argument is outside its allowed range.
struct RangeError : Error {
  using Error::Error;
};

/// A config document is invalid (unknown key, missing field, bad value).
struct ConfigError : Error {
  using Error::Error;
};

/// A core invariant was broken at runtime. Fatal: indicates a bug, not
/// a recoverable condition.
struct InvariantViolation : Error {
  using Error::Error;
};

}  // namespace clr
