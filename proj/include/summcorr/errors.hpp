#pragma once

#include <stdexcept>

namespace summcorr {

// Error taxonomy mirrored by CLI exit codes: parse = 2, validation = 3,
// numerical = 4. Scalar special functions throw std::domain_error directly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

// Inputs that are structurally valid but carry no usable signal
// (e.g. a zero-variance sample handed to a correlation).
struct DegenerateInputError : ValidationError {
  using ValidationError::ValidationError;
};

struct NumericalError : Error {
  using Error::Error;
};

}  // namespace summcorr
