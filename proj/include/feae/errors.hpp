#pragma once

#include <stdexcept>
#include <string>

namespace feae {

// Exception hierarchy. The CLI maps these onto process exit codes:
// ConfigError -> 2, DataError/SchemaError/ParseError/FormatError -> 3,
// NumericError -> 4.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct PreconditionError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct SchemaError : DataError {
  using DataError::DataError;
};

struct ParseError : DataError {
  using DataError::DataError;
};

struct FormatError : DataError {
  using DataError::DataError;
};

}  // namespace feae
