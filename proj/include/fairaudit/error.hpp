#pragma once

#include <stdexcept>
#include <string>

namespace fairaudit {

// Bad input: malformed files, out-of-range values, invalid configuration.
// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input was well-formed but a quantity cannot be computed on it
// (single-class AUROC, empty subgroup, unattainable operating point).
// The CLI maps these to exit code 2.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration error carrying a JSON pointer to the offending field.
class ConfigError : public ValidationError {
 public:
  ConfigError(std::string pointer, const std::string& message)
      : ValidationError(pointer + ": " + message), pointer_(std::move(pointer)) {}

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace fairaudit
