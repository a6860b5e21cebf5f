#pragma once

#include <stdexcept>
#include <string>

namespace cpnn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: wrong shapes, out-of-range parameters, violated
/// preconditions. The CLI maps these to exit code 1.
class ValidationError : public Error {
public:
  using Error::Error;
};

class DimensionError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// Input matrix is (numerically) rank deficient.
class SingularInputError : public Error {
public:
  using Error::Error;
};

/// An iterative method hit its iteration cap.
class NonConvergenceError : public Error {
public:
  using Error::Error;
};

/// Inner linear solver failure (CG cap, breakdown).
class SolverError : public Error {
public:
  using Error::Error;
};

/// Malformed file or document.
class ParseError : public Error {
public:
  using Error::Error;
};

/// Misuse of an API object, e.g. a tape replayed against a different network.
class ContractError : public Error {
public:
  using Error::Error;
};

} // namespace cpnn
