#ifndef ASABF_ERRORS_HPP_
#define ASABF_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace asabf {

// Base class for every error raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/array shape or axis violation.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid argument value (out-of-range parameter, bad geometry, ...).
struct InputError : Error {
  using Error::Error;
};

// Inconsistent or invalid configuration.
struct ConfigError : Error {
  using Error::Error;
};

// A documented API contract was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Numerical failure (non-finite values, degenerate systems).
struct NumericError : Error {
  using Error::Error;
};

// Matrix singular to working precision.
struct SingularMatrixError : NumericError {
  using NumericError::NumericError;
};

// Corrupt or unrecognized file format.
struct FormatError : Error {
  using Error::Error;
};

// Filesystem failure; message carries the offending path.
struct IoError : Error {
  using Error::Error;
};

}  // namespace asabf

#endif  // ASABF_ERRORS_HPP_
