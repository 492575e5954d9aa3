#pragma once

#include <stdexcept>
#include <string>

namespace ginet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input whose contents violate a data invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Not enough data to satisfy the request (too few slots, cycles, windows).
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or divergence during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward() on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace ginet
