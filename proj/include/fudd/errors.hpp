#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fudd {

// Error families map one-to-one onto CLI exit codes.
enum class ErrorFamily {
  invalid_argument,
  format,
  config,
  validation,
  backend,
  cache,
};

std::string_view to_string(ErrorFamily family);

class Error : public std::runtime_error {
 public:
  Error(ErrorFamily family, const std::string& message)
      : std::runtime_error(message), family_(family) {}

  ErrorFamily family() const noexcept { return family_; }

 private:
  ErrorFamily family_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error(ErrorFamily::invalid_argument, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error(ErrorFamily::config, message) {}
};

class CacheError : public Error {
 public:
  explicit CacheError(const std::string& message) : Error(ErrorFamily::cache, message) {}
};

}  // namespace fudd
