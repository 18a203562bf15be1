#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace lorabam {

/// Failure classes. The numeric values double as CLI exit codes.
enum class ErrorCategory : int { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

/// Bad arguments or configuration.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what)
      : Error(ErrorCategory::usage, what) {}
};

/// Malformed or inconsistent input data. Carries the 1-based line and/or the
/// byte offset of the failure when the input was a file.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what,
                     std::optional<std::size_t> line = std::nullopt,
                     std::optional<std::size_t> byte_offset = std::nullopt)
      : Error(ErrorCategory::data, decorate(what, line, byte_offset)),
        line_(line),
        byte_offset_(byte_offset) {}

  std::optional<std::size_t> line() const noexcept { return line_; }
  std::optional<std::size_t> byte_offset() const noexcept {
    return byte_offset_;
  }

 private:
  static std::string decorate(const std::string& what,
                              std::optional<std::size_t> line,
                              std::optional<std::size_t> byte_offset) {
    std::string out;
    if (line) out += "line " + std::to_string(*line) + ": ";
    if (byte_offset) out += "byte " + std::to_string(*byte_offset) + ": ";
    return out + what;
  }

  std::optional<std::size_t> line_;
  std::optional<std::size_t> byte_offset_;
};

/// A monitor file written by an incompatible version of this library.
class VersionError : public DataError {
 public:
  explicit VersionError(const std::string& what) : DataError(what) {}
};

/// Factorization failures, unbounded quantiles and similar.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::numeric, what) {}
};

}  // namespace lorabam
