#pragma once

#include <stdexcept>
#include <string>

namespace measure_filter {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// An enumeration would exceed the configured size cap; prune before retrying.
class ResourceCapError : public Error {
 public:
  using Error::Error;
};

/// The death-process coefficient could not be stabilised even in extended precision.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration. `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Observation times were not strictly increasing.
class NonMonotoneTimesError : public Error {
 public:
  using Error::Error;
};

}  // namespace measure_filter
