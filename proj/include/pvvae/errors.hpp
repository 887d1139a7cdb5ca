#pragma once

#include <stdexcept>
#include <string>

namespace pvvae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model, loss or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or clip shape violates a contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of an operation.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed PVT1 container, manifest or checkpoint.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training stopped because a loss term became non-finite.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace pvvae
