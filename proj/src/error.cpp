#include "ckstab/error.hpp"

namespace ckstab {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMisalignedRun: return "MisalignedRun";
    case ErrorCode::kDuplicateOutcome: return "DuplicateOutcome";
    case ErrorCode::kEmptyRun: return "EmptyRun";
    case ErrorCode::kUnknownTask: return "UnknownTask";
    case ErrorCode::kUnknownExample: return "UnknownExample";
    case ErrorCode::kEmptyReferences: return "EmptyReferences";
    case ErrorCode::kSeriesTooShort: return "SeriesTooShort";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kWindowTooLarge: return "WindowTooLarge";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNameSetMismatch: return "NameSetMismatch";
    case ErrorCode::kNotALabelTask: return "NotALabelTask";
    case ErrorCode::kMissingCheckpointFiles: return "MissingCheckpointFiles";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDivergedTraining: return "DivergedTraining";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMixedRuns: return "MixedRuns";
  }
  return "Unknown";
}

}  // namespace ckstab
