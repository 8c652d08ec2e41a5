#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace popstock {

enum class ErrorCode {
  // regions
  MalformedGeometry,
  DuplicateCode,
  MissingCodeProperty,
  InvalidRegionCode,
  InvalidGroup,
  CoordinateOutOfRange,
  // ingest
  BadHeader,
  UnknownPrecision,
  // stocks
  ShardOverlap,
  MismatchedKey,
  // analytics
  ZeroTotal,
  DegenerateSeries,
  NonFinite,
  ZeroBaseline,
  EmptyWindow,
  GapInSeries,
  // validation
  InvalidParameter,
  NoLabeledResidents,
  TooFewPoints,
  ZeroVariance,
  UnknownRegion,
  // synth
  InvalidConfig,
  // cli / io
  EmptySeries,
  IoError,
  ParseError,
  Usage,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedGeometry: return "MalformedGeometry";
    case ErrorCode::DuplicateCode: return "DuplicateCode";
    case ErrorCode::MissingCodeProperty: return "MissingCodeProperty";
    case ErrorCode::InvalidRegionCode: return "InvalidRegionCode";
    case ErrorCode::InvalidGroup: return "InvalidGroup";
    case ErrorCode::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::UnknownPrecision: return "UnknownPrecision";
    case ErrorCode::ShardOverlap: return "ShardOverlap";
    case ErrorCode::MismatchedKey: return "MismatchedKey";
    case ErrorCode::ZeroTotal: return "ZeroTotal";
    case ErrorCode::DegenerateSeries: return "DegenerateSeries";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::GapInSeries: return "GapInSeries";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::NoLabeledResidents: return "NoLabeledResidents";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::UnknownRegion: return "UnknownRegion";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a stable code so callers
/// (and the CLI) can report it in machine-parsable form.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace popstock
