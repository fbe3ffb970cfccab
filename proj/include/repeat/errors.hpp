// errors.hpp - typed error conditions and the warning channel.
#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace repeat {

enum class ErrorCode {
    IoFailure,
    MalformedHeader,
    UnsupportedDatatype,
    MalformedField,
    InvalidSpacing,
    InvalidWindow,
    NotAMask,
    GeometryMismatch,
    DegenerateVolume,
    EmptyOverlap,
    OutsideSupport,
    NonFiniteCost,
    EmptyRegion,
    EmptyMask,
    FoldingExceeded,
    SpecInvalid,
    WarpNotInvertible,
    IndexOutOfRange,
    ConfigError,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
        case ErrorCode::MalformedField: return "MalformedField";
        case ErrorCode::InvalidSpacing: return "InvalidSpacing";
        case ErrorCode::InvalidWindow: return "InvalidWindow";
        case ErrorCode::NotAMask: return "NotAMask";
        case ErrorCode::GeometryMismatch: return "GeometryMismatch";
        case ErrorCode::DegenerateVolume: return "DegenerateVolume";
        case ErrorCode::EmptyOverlap: return "EmptyOverlap";
        case ErrorCode::OutsideSupport: return "OutsideSupport";
        case ErrorCode::NonFiniteCost: return "NonFiniteCost";
        case ErrorCode::EmptyRegion: return "EmptyRegion";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::FoldingExceeded: return "FoldingExceeded";
        case ErrorCode::SpecInvalid: return "SpecInvalid";
        case ErrorCode::WarpNotInvertible: return "WarpNotInvertible";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

// Warnings go to stderr; they never affect outputs.
inline void warn(const std::string& msg) {
    std::fprintf(stderr, "[repeat] warning: %s\n", msg.c_str());
}

}  // namespace repeat
