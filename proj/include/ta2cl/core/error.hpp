// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ta2cl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
struct ShapeError : Error {
  using Error::Error;
};

/// An argument lies outside the operation's domain (bad k, bad band edge, ...).
struct ValueError : Error {
  using Error::Error;
};

/// A computation produced NaN/Inf, or training diverged.
struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// Invalid run configuration; reported with exit code 2 by the CLI.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace ta2cl
