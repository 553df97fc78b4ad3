#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sbc {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration or arguments. Maps to CLI exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Dataset does not match the model's declared shape, or a CSV row is bad.
class DataError : public Error {
public:
  using Error::Error;
};

/// ODE state became non-finite or left the positive orthant.
class IntegrationFailure : public Error {
public:
  IntegrationFailure(double time, const std::string &what)
      : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

private:
  double time_;
};

/// A finite-difference probe hit a non-finite log density.
class FiniteDiffError : public Error {
public:
  FiniteDiffError(std::size_t index, const std::string &what)
      : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

/// Sampler could not initialize or every warmup transition diverged.
class SamplerError : public Error {
public:
  using Error::Error;
};

/// Diagnostic is undefined for the given draws (e.g. zero variance).
class DiagnosticError : public Error {
public:
  using Error::Error;
};

} // namespace sbc
