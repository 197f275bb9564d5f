#pragma once

#include <stdexcept>
#include <string>

namespace qtp {

/// Invalid input: bad dimensions, broken invariants, malformed configs.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical stage could not meet its tolerance (quadrature budget,
/// imaginary residue, tail leakage, perturbative validity).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configured resource cap was exceeded (plan cap, Fock dimension, grid size).
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qtp
