// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace c2w {

enum class ErrorCode {
  MalformedHeader,
  SizeMismatch,
  NonFiniteData,
  NonBinaryMask,
  InvalidGeometry,
  IoFailure,
  EmptyMask,
  ShapeMismatch,
  GroupDivisibility,
  NotScalar,
  TapeConsumed,
  InvalidSpec,
  SpecMismatch,
  ManifestMismatch,
  UnknownTag,
  MissingGrad,
  OutOfRange,
  InvalidConfig,
  EmptySplit,
  Divergence,
  GeometryMismatch,
  NonPositiveTolerance,
  EmptyPrediction,
  CaseMismatch,
  PreconditionFailed,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library carries one of the codes above so the
/// CLI can map it to a message and a nonzero exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace c2w
