#include "otkd/error.hpp"

namespace otkd {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidPose: return "InvalidPose";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::PointBehindCamera: return "PointBehindCamera";
    case ErrorCode::ZeroGroundTruthTranslation: return "ZeroGroundTruthTranslation";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::EmptyEnsemble: return "EmptyEnsemble";
    case ErrorCode::NoContributors: return "NoContributors";
    case ErrorCode::NonpositiveScale: return "NonpositiveScale";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::EmptyHead: return "EmptyHead";
    case ErrorCode::CenterOutsideMap: return "CenterOutsideMap";
    case ErrorCode::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace otkd
