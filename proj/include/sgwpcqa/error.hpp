#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sgwpcqa {

enum class ErrorCode {
  MalformedHeader,
  UnsupportedFormat,
  TruncatedBody,
  IoError,
  MissingColor,
  NonFinite,
  EmptyCloud,
  DegenerateCloud,
  InvalidK,
  LengthMismatch,
  ShapeMismatch,
  TooLarge,
  InvalidBandCount,
  InvalidArgument,
  DimensionMismatch,
  DegenerateTargets,
  SchemaMismatch,
  CorruptFile,
  ConstantInput,
  InsufficientData,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::TruncatedBody: return "TruncatedBody";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingColor: return "MissingColor";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidBandCount: return "InvalidBandCount";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateTargets: return "DegenerateTargets";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::ConstantInput: return "ConstantInput";
    case ErrorCode::InsufficientData: return "InsufficientData";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sgwpcqa
