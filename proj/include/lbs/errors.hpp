#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lbs {

/// Shapes or block structures that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameter outside the admissible domain (negative sigma, p > 1, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Non-finite values or iterative procedures that failed to converge.
class NumericalFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by a solver when a runtime-checked invariant breaks.
class SolverFault : public NumericalFault {
 public:
  SolverFault(const std::string& what, std::size_t iteration)
      : NumericalFault(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class TrainingFault : public NumericalFault {
 public:
  using NumericalFault::NumericalFault;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lbs
