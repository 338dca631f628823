#pragma once

#include <stdexcept>
#include <string>

namespace eot {

/// Input violated a structural precondition: asymmetry beyond tolerance,
/// indefiniteness, dimension mismatch, malformed problem description.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& message) : std::runtime_error(message) {}
};

/// A computation lost a property it relies on (conditioning, convergence).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace eot
