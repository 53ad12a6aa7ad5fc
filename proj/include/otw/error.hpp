#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The otw Authors

#include <stdexcept>
#include <string>

namespace otw {

/// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input, shape mismatch, or a violated precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf or otherwise could not be carried out.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace otw
