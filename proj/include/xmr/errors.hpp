#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace xmr {

enum class ErrorCode : std::uint8_t {
  kIo,
  kFormat,
  kDimensionMismatch,
  kDuplicateId,
  kZeroNorm,
  kNonFinite,
  kUnknownId,
  kDuplicateImagePairing,
  kUnpairedImage,
  kEmptySearchSet,
  kNoPairedNeighbours,
  kEmptyTrainingImages,
  kBatchTooSmall,
  kNoValidNegative,
  kInvalidConfig,
  kNonFiniteLoss,
  kEmptyResult,
  kAllTokensOov,
  kEmptyVocabulary,
  kNotFitted,
  kPoolTooLarge,
  kTrainTestOverlap,
  kEmptyIntersection,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers and tests can dispatch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kFormat: return "MalformedFile";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kZeroNorm: return "ZeroNormRow";
    case ErrorCode::kNonFinite: return "NonFiniteEntry";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kDuplicateImagePairing: return "DuplicateImagePairing";
    case ErrorCode::kUnpairedImage: return "UnpairedImage";
    case ErrorCode::kEmptySearchSet: return "EmptySearchSet";
    case ErrorCode::kNoPairedNeighbours: return "NoPairedNeighbours";
    case ErrorCode::kEmptyTrainingImages: return "EmptyTrainingImages";
    case ErrorCode::kBatchTooSmall: return "BatchTooSmall";
    case ErrorCode::kNoValidNegative: return "NoValidNegative";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kEmptyResult: return "EmptyResult";
    case ErrorCode::kAllTokensOov: return "AllTokensOOV";
    case ErrorCode::kEmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::kNotFitted: return "NotFitted";
    case ErrorCode::kPoolTooLarge: return "PoolTooLarge";
    case ErrorCode::kTrainTestOverlap: return "TrainTestOverlap";
    case ErrorCode::kEmptyIntersection: return "EmptyIntersection";
  }
  return "Error";
}

}  // namespace xmr
