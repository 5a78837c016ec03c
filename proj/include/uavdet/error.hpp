// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace uavdet {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not agree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of range or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Dataset, annotation, checkpoint or image I/O failure.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace uavdet
