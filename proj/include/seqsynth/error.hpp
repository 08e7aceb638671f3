#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seqsynth {

enum class ErrorCode {
  // data-model
  ParseError,
  UnknownColumn,
  InvalidValue,
  NonConstantContext,
  UnorderableIndex,
  // transforms
  EmptyColumn,
  UnseenCategory,
  MalformedFragment,
  MissingFraming,
  // context model
  EmptyContextTable,
  // network / model
  ShapeMismatch,
  NonFiniteGradient,
  NonFiniteLoss,
  NegativeCount,
  IndexOutOfRange,
  // evaluation
  EmptySample,
  NonNumericColumn,
  NoApplicableColumn,
  SchemaMismatch,
  // persistence / cli
  VersionMismatch,
  IoError,
  InvalidConfig,
};

inline constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::NonConstantContext: return "NonConstantContext";
    case ErrorCode::UnorderableIndex: return "UnorderableIndex";
    case ErrorCode::EmptyColumn: return "EmptyColumn";
    case ErrorCode::UnseenCategory: return "UnseenCategory";
    case ErrorCode::MalformedFragment: return "MalformedFragment";
    case ErrorCode::MissingFraming: return "MissingFraming";
    case ErrorCode::EmptyContextTable: return "EmptyContextTable";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NegativeCount: return "NegativeCount";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::NonNumericColumn: return "NonNumericColumn";
    case ErrorCode::NoApplicableColumn: return "NoApplicableColumn";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// True for failures of the numerical machinery (as opposed to bad input).
inline constexpr bool is_numeric_failure(ErrorCode code) noexcept {
  return code == ErrorCode::ShapeMismatch || code == ErrorCode::NonFiniteGradient ||
         code == ErrorCode::NonFiniteLoss;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace seqsynth
