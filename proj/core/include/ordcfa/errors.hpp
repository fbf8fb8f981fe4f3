#pragma once

#include <stdexcept>
#include <string>

namespace ordcfa {

/// Malformed model specification, data, or file input.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical precondition does not hold (non-increasing thresholds,
/// singular covariance, nonpositive scale, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative procedure failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ordcfa
