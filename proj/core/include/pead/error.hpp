#pragma once

#include <stdexcept>
#include <string>

namespace pead {

/// Malformed or inconsistent input data (CSV bundles, price coverage).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A price series does not cover a requested return window.
class CoverageError : public DataError {
 public:
  using DataError::DataError;
};

/// Invalid configuration values or config documents.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pead
