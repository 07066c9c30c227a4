#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowdistill {

// Invalid argument, bad configuration, dimension mismatch.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A noise-level sequence that is not strictly decreasing where it must be.
class ScheduleError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

// Requested computation exists but is not supported for these inputs.
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A state or loss became non-finite. Carries the index of the offending step.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class TrainingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace flowdistill
