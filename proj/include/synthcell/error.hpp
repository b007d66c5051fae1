#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace synthcell {

enum class ErrorCode {
  // validation
  NotFound,
  UnsupportedFormat,
  OutOfBounds,
  InvalidParam,
  ChannelMismatch,
  DimensionMismatch,
  InvalidIndex,
  EmptyDataset,
  EmptyPool,
  NoCells,
  InsufficientData,
  InsufficientSamples,
  NoGroundTruth,
  InvalidConfig,
  InvalidManifest,
  // runtime
  NoOutsidePixels,
  DegenerateResult,
  NoValidPlacement,
  NumericalFailure,
  IoFailure,
  // external process
  ProcessFailure,
  ProtocolError,
  DimensionDrift,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::InvalidParam: return "InvalidParam";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidIndex: return "InvalidIndex";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::NoCells: return "NoCells";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::NoGroundTruth: return "NoGroundTruth";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::NoOutsidePixels: return "NoOutsidePixels";
    case ErrorCode::DegenerateResult: return "DegenerateResult";
    case ErrorCode::NoValidPlacement: return "NoValidPlacement";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ProcessFailure: return "ProcessFailure";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::DimensionDrift: return "DimensionDrift";
  }
  return "Unknown";
}

/// Process exit code for an error: 2 validation, 3 runtime/numerical,
/// 4 external process.
constexpr int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoOutsidePixels:
    case ErrorCode::DegenerateResult:
    case ErrorCode::NoValidPlacement:
    case ErrorCode::NumericalFailure:
    case ErrorCode::IoFailure:
      return 3;
    case ErrorCode::ProcessFailure:
    case ErrorCode::ProtocolError:
    case ErrorCode::DimensionDrift:
      return 4;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace synthcell
