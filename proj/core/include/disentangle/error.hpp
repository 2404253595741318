#pragma once

#include <stdexcept>
#include <string>

namespace disentangle {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined by an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Class label outside [0, classes).
class LabelError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a precondition of the API (non-scalar loss, missing grad, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared in values or gradients.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape placement that does not fit inside the canvas.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Dataset or checkpoint content that cannot be read.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure while writing artifacts.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace disentangle
