#pragma once

#include <stdexcept>
#include <string>

namespace sevalign {

/// Operand dimensions do not compose.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input violates a documented precondition or data invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration document; `key()` names the offending field.
class ConfigError : public ValidationError {
 public:
  ConfigError(std::string key, const std::string& what)
      : ValidationError(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace sevalign
