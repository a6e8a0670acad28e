#pragma once

#include <stdexcept>
#include <string>

namespace refseg {

/// Invalid user-supplied configuration (counts, sizes, flags).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file or dependency parse.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad argument to an operation (shape mismatch, empty input, ...).
struct ArgumentError : std::runtime_error {
  explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerically degenerate input (zero-norm vector where a direction is needed).
struct DegeneracyError : std::runtime_error {
  explicit DegeneracyError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Internal invariant violation; indicates a bug, not a user error.
struct InternalError : std::logic_error {
  explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace refseg
