#pragma once

#include <stdexcept>
#include <string>

namespace rfkit {

// Root of the library's exception hierarchy. The CLI maps each branch to an
// exit code: InvalidArgument -> 1, DataError -> 2, NumericalError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad parameter values (df out of range, unsupported rank, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Inputs that are well-formed requests but unusable data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Singular systems, divergence, non-finite intermediate values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rfkit
