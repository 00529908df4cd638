// Copyright 2026 The fewshot Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fewshot {

/// Base class of every error raised by the library. The CLI maps each
/// subclass onto a stable exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File content is malformed (bad magic, version, truncation, ragged rows...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Shapes or preconditions of an operation do not hold.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Numerically degenerate input or result (zero-norm vectors, NaN losses).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The dataset cannot support the requested episode shape.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Bad command-line or configuration input.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace fewshot
