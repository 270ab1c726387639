#pragma once

#include <stdexcept>
#include <string>

namespace grpboost {

/// Failure classes; the CLI maps each to a distinct exit code.
enum class ErrorKind { kConfig = 2, kData = 3, kNumeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }
  const char* kind_name() const noexcept {
    switch (kind_) {
      case ErrorKind::kConfig: return "config";
      case ErrorKind::kData: return "data";
      case ErrorKind::kNumeric: return "numeric";
    }
    return "unknown";
  }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

}  // namespace grpboost
