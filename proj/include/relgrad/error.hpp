// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace relgrad {

enum class ErrorCode {
  KeyOutOfDomain,
  ShapeMismatch,
  DuplicateKey,
  KeySetMismatch,
  DomainError,
  ArityMismatch,
  ShapeIncompatible,
  KeySetMismatchAtAdd,
  CyclicPlan,
  NonEquiPredicate,
  ProjCollision,
  InputSchemaMismatch,
  NonScalarRoot,
  UnsupportedAggregationKernel,
  UnknownOperator,
  UnknownKernel,
  LayoutMismatch,
  SyntaxError,
  UnknownName,
  ParseError,
  FdSizeGuard,
  NonFiniteLoss,
  InvalidArgument,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this exception. The code is
// stable and meant for programmatic checks; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  // Same code, message prefixed with some context (e.g. the node name).
  Error with_context(std::string_view context) const {
    return Error(code_, std::string(context) + ": " + detail_);
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace relgrad
