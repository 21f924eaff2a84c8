#pragma once

#include <stdexcept>
#include <string>

namespace qtune {

enum class ErrorCode {
  kNoTrainablePositions,
  kEmptyInput,
  kInvalidArgument,
  kMalformedJson,
  kSchemaViolation,
  kNonFinite,
  kNegativeValue,
  kEmptyTokens,
  kReferenceRequired,
  kEmptyPopulation,
  kMisalignedStreams,
  kSinkFailure,
  kConfig,
};

/// Short stable name used in messages and CLI diagnostics.
const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qtune
