// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowrl/error.hpp"

namespace flowrl {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::GenerationFailure: return "generation-failure";
    case ErrorKind::NumericError: return "numeric-error";
    case ErrorKind::IoError: return "io-error";
    case ErrorKind::FormatError: return "format-error";
    case ErrorKind::ConfigError: return "config-error";
    case ErrorKind::DegenerateMask: return "degenerate-mask";
    case ErrorKind::EmptyTrajectory: return "empty-trajectory";
    case ErrorKind::TrainingDiverged: return "training-diverged";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError: return 2;
    case ErrorKind::IoError: return 3;
    case ErrorKind::FormatError: return 4;
    case ErrorKind::InvalidArgument: return 5;
    case ErrorKind::NumericError: return 6;
    case ErrorKind::GenerationFailure: return 7;
    case ErrorKind::TrainingDiverged: return 8;
    case ErrorKind::DegenerateMask: return 9;
    case ErrorKind::EmptyTrajectory: return 10;
  }
  return 1;
}

}  // namespace flowrl
