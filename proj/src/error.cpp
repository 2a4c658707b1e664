// SPDX-License-Identifier: Apache-2.0
#include "c2w/error.hpp"

namespace c2w {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::NonFiniteData: return "NonFiniteData";
    case ErrorCode::NonBinaryMask: return "NonBinaryMask";
    case ErrorCode::InvalidGeometry: return "InvalidGeometry";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::GroupDivisibility: return "GroupDivisibility";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::TapeConsumed: return "TapeConsumed";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::SpecMismatch: return "SpecMismatch";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::UnknownTag: return "UnknownTag";
    case ErrorCode::MissingGrad: return "MissingGrad";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::NonPositiveTolerance: return "NonPositiveTolerance";
    case ErrorCode::EmptyPrediction: return "EmptyPrediction";
    case ErrorCode::CaseMismatch: return "CaseMismatch";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
  }
  return "Unknown";
}

}  // namespace c2w
