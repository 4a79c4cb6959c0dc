#pragma once

#include <stdexcept>
#include <string>

namespace epr {

/// Bad configuration or unparsable input (maps to CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// An operation was invoked on data that does not satisfy its preconditions
/// (maps to CLI exit code 3).
class PreconditionError : public std::runtime_error {
 public:
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

/// Structural corruption in a record stream, e.g. duplicate ticks
/// (maps to CLI exit code 4).
class IntegrityError : public std::runtime_error {
 public:
  explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace epr
