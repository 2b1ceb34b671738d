#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cayley {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;

// Base class for all library errors. Subclasses exist so callers can react
// to the failure class; every message must name the offending object
// (generator, walk index, file, ...) so it is actionable on its own.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched sizes between objects that must agree (permutation vs state,
// feature dim vs model input, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed external input: puzzle JSON, scramble CSV, CLI config.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A memory or size budget was exceeded; message reports progress made.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss, invalid numeric configuration, and similar.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// A binary artifact failed its integrity check (bad magic, version, CRC).
class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace cayley
