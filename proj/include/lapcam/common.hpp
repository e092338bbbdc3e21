#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lapcam {

inline constexpr const char* kFormatVersion = "lapcam-1";

/// Base for all errors raised by the library. The CLI maps each subclass to
/// an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent parameters (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Input row could not be parsed.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input parsed but violates a structural requirement (e.g. time ordering).
class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

/// An internal contract was broken (exit code 4).
class InvariantError : public Error {
 public:
  using Error::Error;
};

inline void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

inline void require_invariant(bool ok, const std::string& what) {
  if (!ok) throw InvariantError(what);
}

}  // namespace lapcam
