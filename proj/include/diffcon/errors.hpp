#pragma once

#include <stdexcept>
#include <string>

namespace diffcon {

// Dimension mismatch between vectors, matrices or layers.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid construction parameter (schedule, config, divergence spec, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Step index or other integer argument outside its admissible range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Argument outside the mathematical domain of a function (e.g. f(t), t <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite value, failed bisection, overflow.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sampling chain produced a non-finite state.
class DivergenceError : public NumericError {
 public:
  DivergenceError(int step, const std::string& what)
      : NumericError("diverged at t=" + std::to_string(step) + ": " + what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

// Malformed input file (config, checkpoint).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or unwritable file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diffcon
