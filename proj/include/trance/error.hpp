#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trance {

enum class ErrorCode {
  // archive / file formats
  MagicMismatch,
  TruncatedPayload,
  ShapeInconsistent,
  HeadMismatch,
  IoFailure,
  // shapes and arguments
  ShapeMismatch,
  DimensionMismatch,
  EmptyInput,
  EmptySubset,
  IndexOutOfRange,
  BadM,
  InvalidArgument,
  ClassNotFound,
  LayerMissing,
  NotFitted,
  // numerics
  NonFiniteLoss,
  TooFewRows,
  NegativeInput,
  DomainExceeded,
  ZeroVector,
  ZeroVariance,
  DegenerateReference,
  SeriesTooShort,
  ZeroPower,
  OutOfRange,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::ShapeInconsistent: return "ShapeInconsistent";
    case ErrorCode::HeadMismatch: return "HeadMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::BadM: return "BadM";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ClassNotFound: return "ClassNotFound";
    case ErrorCode::LayerMissing: return "LayerMissing";
    case ErrorCode::NotFitted: return "NotFitted";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::NegativeInput: return "NegativeInput";
    case ErrorCode::DomainExceeded: return "DomainExceeded";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::DegenerateReference: return "DegenerateReference";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::ZeroPower: return "ZeroPower";
    case ErrorCode::OutOfRange: return "OutOfRange";
  }
  return "Unknown";
}

/// Broad category of an error; the CLI maps these onto exit codes.
enum class ErrorCategory { Usage, Data, Numerical };

inline ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::DomainExceeded:
    case ErrorCode::ZeroVector:
    case ErrorCode::ZeroVariance:
    case ErrorCode::DegenerateReference:
    case ErrorCode::ZeroPower:
      return ErrorCategory::Numerical;
    case ErrorCode::InvalidArgument:
    case ErrorCode::BadM:
    case ErrorCode::OutOfRange:
      return ErrorCategory::Usage;
    default:
      return ErrorCategory::Data;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace trance
