#pragma once

#include <stdexcept>
#include <string>

namespace cmab {

// Every failure raised by the library derives from Error; the CLI maps the
// concrete type onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed inputs: invalid strategies, bad sizes, out-of-range parameters.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad run configuration: unknown JSON fields, a learning-rate setting whose
// preconditions fail, and so on.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// The instance has no strictly feasible strategy, or the offline benchmark
// program is infeasible.
class FeasibilityError : public Error {
 public:
  using Error::Error;
};

// The OMD inner solver did not reach the required KKT accuracy.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitFeasibility = 3,
  kExitConvergence = 4,
};

}  // namespace cmab
