// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace stam {

// Base of every error raised by the library. The CLI maps these onto exit
// code 1; usage problems never reach this hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or invalid convolution/pool geometry.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition (non-scalar loss, bad mask size).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents; messages carry the offending line when known.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input whose values are unusable (NaN, duplicate frames, bad labels).
class DataError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace stam
