#pragma once

#include <stdexcept>
#include <string>

namespace otkd {

enum class ErrorCode {
  InvalidArgument,
  ParseError,
  DimensionMismatch,
  ShapeMismatch,
  InvalidPose,
  InvalidModel,
  PointBehindCamera,
  ZeroGroundTruthTranslation,
  EmptySet,
  NegativeWeight,
  EmptyEnsemble,
  NoContributors,
  NonpositiveScale,
  OutOfRange,
  ZeroCount,
  EmptyHead,
  CenterOutsideMap,
  InsufficientCorrespondences,
  DegenerateConfiguration,
  TrainingDiverged,
};

const char* to_string(ErrorCode code) noexcept;

// All library failures surface as otkd::Error; code() identifies the contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace otkd
