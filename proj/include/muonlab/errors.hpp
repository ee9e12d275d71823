#pragma once

#include <stdexcept>
#include <string>

namespace muonlab {

/// Raised when an argument violates a documented precondition (shape, range, finiteness).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when an iteration produces non-finite values or fails to converge.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace muonlab
