#include "qtune/error.hpp"

namespace qtune {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoTrainablePositions: return "no_trainable";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kMalformedJson: return "malformed_json";
    case ErrorCode::kSchemaViolation: return "schema";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kNegativeValue: return "negative_value";
    case ErrorCode::kEmptyTokens: return "empty_tokens";
    case ErrorCode::kReferenceRequired: return "reference_required";
    case ErrorCode::kEmptyPopulation: return "empty_population";
    case ErrorCode::kMisalignedStreams: return "misaligned_streams";
    case ErrorCode::kSinkFailure: return "sink_failure";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace qtune
