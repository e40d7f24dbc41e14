#pragma once

#include <stdexcept>
#include <string>

namespace recdiff {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or usage. The CLI maps this to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked on an object that is not ready for it.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during training or sampling.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace recdiff
