#pragma once

#include <stdexcept>
#include <string>

namespace rewag {

/// Base class for all rewag errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A pose or tile index falls outside the grid footprint.
struct OutOfBoundsError : Error {
  using Error::Error;
};

/// A tile was claimed for a pose it does not own.
struct MismatchedTileError : Error {
  using Error::Error;
};

/// NaN or infinity where a finite value is required.
struct NonFiniteError : Error {
  using Error::Error;
};

/// A displacement or parameter exceeds its allowed range.
struct RangeError : Error {
  using Error::Error;
};

/// Matrix/vector dimensions inconsistent with the configured shapes.
struct ShapeMismatchError : Error {
  using Error::Error;
};

/// A score vector does not match the particle count.
struct LengthMismatchError : Error {
  using Error::Error;
};

/// A mining batch with all three similarity classes empty.
struct EmptyBatchError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// Checksum mismatch, bad magic, or truncated store file.
struct CorruptStoreError : Error {
  using Error::Error;
};

struct VersionMismatchError : Error {
  using Error::Error;
};

/// Structural problem in a configuration file (syntax, unknown key).
struct ParseError : Error {
  using Error::Error;
};

/// A configuration value violates its documented range.
struct ValidationError : Error {
  using Error::Error;
};

}  // namespace rewag
