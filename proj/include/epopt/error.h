#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace epopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rejection sampling of a truncated Gaussian exceeded its attempt cap.
class TruncationError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class UnknownParameter : public Error {
 public:
  using Error::Error;
};

// A state, action or network output became NaN/inf.
class NumericalBlowup : public Error {
 public:
  NumericalBlowup(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// No importance sample explains the observed data.
class DegeneratePosterior : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace epopt
