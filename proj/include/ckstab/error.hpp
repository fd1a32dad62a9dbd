#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ckstab {

enum class ErrorCode {
  kMisalignedRun,
  kDuplicateOutcome,
  kEmptyRun,
  kUnknownTask,
  kUnknownExample,
  kEmptyReferences,
  kSeriesTooShort,
  kEmptyInput,
  kWindowTooLarge,
  kShapeMismatch,
  kNameSetMismatch,
  kNotALabelTask,
  kMissingCheckpointFiles,
  kCorruptCheckpoint,
  kVersionMismatch,
  kIoError,
  kInvalidConfig,
  kDimensionMismatch,
  kDivergedTraining,
  kParseError,
  kInvalidArgument,
  kMixedRuns,
};

std::string_view ErrorCodeName(ErrorCode code);

// All library failures are reported through this exception type; callers
// dispatch on code() (the CLI maps codes onto exit statuses).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ckstab
