#pragma once

#include <stdexcept>
#include <string>

namespace graphcp {

/// Invalid user configuration (bad alpha, unknown method, malformed config file).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Input data violates a format or domain invariant.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A numeric routine produced a non-finite or otherwise unusable result.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace graphcp
