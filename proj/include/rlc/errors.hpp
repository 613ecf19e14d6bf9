#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rlc {

/// Ill-posed or malformed input: bad files, invariant violations, support
/// violations. The CLI maps these to exit code 1.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A divergence argument has mass where the order's support rule forbids it.
class SupportError : public InputError {
 public:
  SupportError(const std::string& what, std::size_t outcome)
      : InputError(what), outcome_(outcome) {}
  std::size_t outcome() const { return outcome_; }

 private:
  std::size_t outcome_;
};

/// Numerical failure: non-convergence, divergence, non-finite results.
/// The CLI maps these to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rlc
