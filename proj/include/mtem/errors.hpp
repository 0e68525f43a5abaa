#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mtem {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of a closed-form or inverse function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A registry lookup (problem or policy name) failed.
class UnknownNameError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// The problem lacks the (r, Kbar) growth declaration an operation needs.
class MissingGrowthError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class InsufficientPointsError : public Error {
 public:
  using Error::Error;
};

// A scheme step produced a non-finite state component.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : Error(what + " (non-finite state at step " + std::to_string(step) + ")"),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace mtem
