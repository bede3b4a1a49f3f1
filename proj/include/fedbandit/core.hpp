#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fedbandit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Raised for caller bugs: arguments outside an operation's domain.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a matrix that must be positive definite is not, or a
// quantity that must be finite has blown up.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when rejection sampling cannot build an environment.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace fedbandit
