#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddr {

enum class ErrorCode {
  // configuration
  InvalidArgument,
  // data
  Io,
  ParseError,
  NonMonotonicTime,
  MixedSchema,
  EmptyStream,
  EmptyTrack,
  StreamTooShort,
  NoOverlap,
  DegeneratePath,
  InsufficientCoverage,
  NotStationary,
  CalibrationFailed,
  BadMagic,
  ShapeMismatch,
  MissingTensor,
  UnsupportedArch,
  // numeric
  IntegrationDiverged,
  NonFinite,
};

constexpr std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::MixedSchema: return "MixedSchema";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::StreamTooShort: return "StreamTooShort";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::DegeneratePath: return "DegeneratePath";
    case ErrorCode::InsufficientCoverage: return "InsufficientCoverage";
    case ErrorCode::NotStationary: return "NotStationary";
    case ErrorCode::CalibrationFailed: return "CalibrationFailed";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingTensor: return "MissingTensor";
    case ErrorCode::UnsupportedArch: return "UnsupportedArch";
    case ErrorCode::IntegrationDiverged: return "IntegrationDiverged";
    case ErrorCode::NonFinite: return "NonFinite";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so that
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  bool is_numeric() const noexcept {
    return code_ == ErrorCode::IntegrationDiverged || code_ == ErrorCode::NonFinite;
  }
  bool is_config() const noexcept {
    return code_ == ErrorCode::InvalidArgument || code_ == ErrorCode::UnsupportedArch;
  }

 private:
  ErrorCode code_;
};

}  // namespace ddr
