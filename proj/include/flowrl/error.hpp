// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace flowrl {

enum class ErrorKind {
  InvalidArgument,
  GenerationFailure,
  NumericError,
  IoError,
  FormatError,
  ConfigError,
  DegenerateMask,
  EmptyTrajectory,
  TrainingDiverged,
};

const char* to_string(ErrorKind kind);

// Process exit code used by the CLI for each error class.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by samplers and losses; carries the step or batch index that first
// produced a non-finite value.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, long index)
      : Error(ErrorKind::NumericError, what), index_(index) {}

  long index() const { return index_; }

 private:
  long index_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::InvalidArgument, what);
}

// Literal messages build no string unless the check fails.
inline void require(bool cond, const char* what) {
  if (!cond) fail(ErrorKind::InvalidArgument, what);
}

}  // namespace flowrl
