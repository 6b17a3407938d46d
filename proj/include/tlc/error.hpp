#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tlc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, negative evidence, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: total conflict, non-finite loss, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line` is 1-based; 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// Malformed or incompatible binary checkpoint.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written by a format version this build cannot read.
class UnsupportedVersion : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace tlc
