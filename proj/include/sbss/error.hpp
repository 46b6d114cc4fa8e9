// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace sbss {

/// Base class of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or feature-map dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Numerically invalid parameters (non-finite values, unstable SSM poles).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration values (odd window, unknown preset, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported input data (WAV files, silent signals, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormatError : public DataError {
 public:
  using DataError::DataError;
};

// Weight container errors. Each corruption class maps to exactly one type.
class StoreError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public StoreError {
 public:
  using StoreError::StoreError;
};
class VersionError : public StoreError {
 public:
  using StoreError::StoreError;
};
class ChecksumError : public StoreError {
 public:
  using StoreError::StoreError;
};
class TruncatedError : public StoreError {
 public:
  using StoreError::StoreError;
};
class MalformedContainerError : public StoreError {
 public:
  using StoreError::StoreError;
};
class InconsistentModelError : public StoreError {
 public:
  using StoreError::StoreError;
};

}  // namespace sbss
