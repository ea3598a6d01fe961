#pragma once

#include <stdexcept>
#include <string>

namespace screenkhorn {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid scalar parameter (eta <= 0, factor outside (0,1], ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-domain input data (negative cost, zero weight, parse failure).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Cost construction is degenerate (e.g. every pairwise distance is zero and normalization was requested).
class DegenerateCostError : public InputError {
 public:
  using InputError::InputError;
};

/// Dimensions of two operands disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value left the representable range of double (overflow, underflow to zero).
class NumericRangeError : public Error {
 public:
  using Error::Error;
};

/// Screening produced an empty active set or a zero ratio at the budget index.
class DegenerateScreeningError : public Error {
 public:
  using Error::Error;
};

/// The box bounds computed for the screened problem are empty (lower > upper).
class InfeasibleBoundsError : public Error {
 public:
  InfeasibleBoundsError(const std::string& what, double lower, double upper)
      : Error(what + " (lower=" + std::to_string(lower) + ", upper=" + std::to_string(upper) + ")"),
        lower_(lower),
        upper_(upper) {}

  double lower() const { return lower_; }
  double upper() const { return upper_; }

 private:
  double lower_;
  double upper_;
};

/// Verification solver failed to reach its tolerance. Tests must not treat this as a pass.
class OracleFailure : public Error {
 public:
  using Error::Error;
};

/// Operation refused because its input does not meet a precondition (e.g. non-converged result).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_same(std::ptrdiff_t a, std::ptrdiff_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a) + " != " + std::to_string(b));
  }
}

}  // namespace detail
}  // namespace screenkhorn
