#pragma once

#include <stdexcept>
#include <string>

namespace ptd {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid descriptor table, template or option set.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A word or id that does not exist where it was looked up.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Caller passed arguments that violate an operation's precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A per-image score could not be computed; the record is excluded with this reason.
class ScoreError : public Error {
 public:
  using Error::Error;
};

/// Generation or embedding backend could not be reached after all retries.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Matrix computation left its tolerance envelope (e.g. a non-PSD covariance).
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double offending_value)
      : Error(what), value_(offending_value) {}
  double value() const noexcept { return value_; }

 private:
  double value_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class AuthorizationError : public Error {
 public:
  using Error::Error;
};

}  // namespace ptd
