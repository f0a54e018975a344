// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tempocoh {

// Base class for all library errors. Subtypes map onto CLI exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes. Message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Math domain violation (log of non-positive value, etc).
struct DomainError : Error {
  using Error::Error;
};

// Invalid configuration value (even kernel width, negative lambda, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Violated API precondition (empty batch, non-scalar backward root, ...).
struct ContractError : Error {
  using Error::Error;
};

// Malformed text input; message carries a line number.
struct ParseError : Error {
  using Error::Error;
};

// File I/O or container format problem; message carries a byte offset
// where that is meaningful.
struct IoError : Error {
  using Error::Error;
};

// Non-finite value encountered during training; message names the batch.
struct NumericError : Error {
  using Error::Error;
};

// Inputs that do not belong together (label-space mismatch, unknown id).
struct MismatchError : Error {
  using Error::Error;
};

}  // namespace tempocoh
