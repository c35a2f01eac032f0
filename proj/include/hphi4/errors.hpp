#pragma once

#include <stdexcept>
#include <string>

namespace hphi4 {

// Error categories, mirrored by the CLI exit codes:
//   config/usage -> 2, capacity -> 3, numerical assertion -> 4, I/O -> 5.

// Bad or missing configuration values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: mismatched bases, invalid time arguments, empty paths.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A request exceeds a declared resource ceiling (mode count, degree, block index).
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numerical invariant failed (non-convergence, tolerance violation).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File system / serialization failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hphi4
