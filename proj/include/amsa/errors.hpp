#pragma once

#include <stdexcept>
#include <string>

namespace amsa {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Vector/matrix shape disagreement. Message names the offending level and
// the expected/actual dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Index outside the sample space or level range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Input failed a validation predicate (non-stochastic row, NaN entry, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Kernel has no unique stationary distribution, or the stationary solver
// failed to reach its residual target.
class ErgodicityError : public Error {
 public:
  using Error::Error;
};

// Second eigenvalue modulus at or above 1: no geometric mixing certificate.
class NonGeometricError : public Error {
 public:
  using Error::Error;
};

// Solver iterate became non-finite or exceeded the norm cap.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long iteration, int level)
      : Error(what), iteration(iteration), level(level) {}
  long iteration;
  int level;
};

// An iterative inner solve hit its cap before reaching tolerance.
class NonConvergenceError : public Error {
 public:
  using Error::Error;
};

// Singular linear system where a unique solution was required.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

// Benchmark generator exhausted its regeneration attempts.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// API misuse: wrong schedule kind, missing records, unsupported N, ...
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace amsa
