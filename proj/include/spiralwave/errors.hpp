#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace spiralwave {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A derivative of higher order than the model can supply was requested.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument ranges (grid bounds, polynomial orders, fit inputs).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Unscaled special-function value would overflow a double.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// A computed profile broke a structural invariant (positivity, monotonicity).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// GridFunction lacks the endpoint metadata an operation needs.
class MissingMetadata : public Error {
 public:
  using Error::Error;
};

/// Newton or fixed-point iteration failed to converge.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> history = {})
      : Error(what), history_(std::move(history)) {}

  /// Damping factors (Newton) or update norms (fixed point) per iteration.
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// A measured frequency correction exceeded its tolerance.
class TheoremViolation : public Error {
 public:
  TheoremViolation(const std::string& what, int order, double value, double tolerance)
      : Error(what), order_(order), value_(value), tolerance_(tolerance) {}

  int order() const noexcept { return order_; }
  double value() const noexcept { return value_; }
  double tolerance() const noexcept { return tolerance_; }

 private:
  int order_;
  double value_;
  double tolerance_;
};

/// Malformed or incomplete run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace spiralwave
