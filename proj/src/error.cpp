#include "cifcast/error.hpp"

namespace cifcast {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::ZeroGeneration: return "zero_generation";
    case ErrorCode::OutOfBounds: return "out_of_bounds";
    case ErrorCode::TooShort: return "too_short";
    case ErrorCode::BackendUnavailable: return "backend_unavailable";
    case ErrorCode::HorizonTooLong: return "horizon_too_long";
    case ErrorCode::LookbackTooShort: return "lookback_too_short";
    case ErrorCode::AllMissing: return "all_missing";
    case ErrorCode::DuplicateName: return "duplicate_name";
    case ErrorCode::InvalidEndpoint: return "invalid_endpoint";
    case ErrorCode::UnknownModel: return "unknown_model";
    case ErrorCode::InvalidMode: return "invalid_mode";
    case ErrorCode::GridMismatch: return "grid_mismatch";
    case ErrorCode::ResolutionMismatch: return "resolution_mismatch";
    case ErrorCode::LengthMismatch: return "length_mismatch";
    case ErrorCode::InfeasibleTarget: return "infeasible_target";
    case ErrorCode::NoMaskedPositions: return "no_masked_positions";
    case ErrorCode::AllBelowEpsilon: return "all_below_epsilon";
    case ErrorCode::DegenerateSeries: return "degenerate_series";
    case ErrorCode::ConflictingValue: return "conflicting_value";
    case ErrorCode::SchemaViolation: return "schema_violation";
    case ErrorCode::ParseError: return "parse_error";
    case ErrorCode::UnknownGrid: return "unknown_grid";
    case ErrorCode::NoData: return "no_data";
    case ErrorCode::NoForecast: return "no_forecast";
    case ErrorCode::TruthUnavailable: return "truth_unavailable";
    case ErrorCode::InsufficientHistory: return "insufficient_history";
    case ErrorCode::IoError: return "io_error";
    }
    return "unknown";
}

} // namespace cifcast
