#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fpdm {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed something the contract forbids (bad shape, bad range, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// A value became NaN/Inf, or an iteration ran away.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Fixed-point iteration left the finite range or crossed the divergence guard.
// Carries the residual history observed before the failure.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::vector<double> deltas, int iterations_reached)
      : NumericError(what), deltas_(std::move(deltas)), iterations_reached_(iterations_reached) {}

  const std::vector<double>& deltas() const { return deltas_; }
  int iterations_reached() const { return iterations_reached_; }

 private:
  std::vector<double> deltas_;
  int iterations_reached_;
};

// Counted block forward passes disagree with the priced plan.
class AuditError : public Error {
 public:
  using Error::Error;
};

}  // namespace fpdm
