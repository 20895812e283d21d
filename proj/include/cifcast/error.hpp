#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cifcast {

enum class ErrorCode {
    InvalidArgument,
    ZeroGeneration,
    OutOfBounds,
    TooShort,
    BackendUnavailable,
    HorizonTooLong,
    LookbackTooShort,
    AllMissing,
    DuplicateName,
    InvalidEndpoint,
    UnknownModel,
    InvalidMode,
    GridMismatch,
    ResolutionMismatch,
    LengthMismatch,
    InfeasibleTarget,
    NoMaskedPositions,
    AllBelowEpsilon,
    DegenerateSeries,
    ConflictingValue,
    SchemaViolation,
    ParseError,
    UnknownGrid,
    NoData,
    NoForecast,
    TruthUnavailable,
    InsufficientHistory,
    IoError,
};

/// Stable snake_case name, used as the machine-readable `code` in API errors.
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace cifcast
