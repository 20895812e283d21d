#pragma once

#include "cifcast/series.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cifcast {

enum class Mode { zero_shot, fine_tuned };

std::string_view to_string(Mode mode) noexcept; // "ZS" / "FT"
Mode parse_mode(std::string_view text);

struct BackendDescriptor {
    std::string name;
    Mode mode = Mode::zero_shot;
    bool can_forecast = false;
    bool can_impute = false;
    std::optional<int> max_horizon; // hours; nullopt = unbounded

    friend bool operator==(const BackendDescriptor&, const BackendDescriptor&) = default;
};

struct ForecastRequest {
    std::string grid_id;
    CarbonSeries lookback; // fully observed, ends where the forecast starts
    int horizon_hours = 0;
};

struct HourInterval {
    double lower = 0.0;
    double upper = 0.0;

    friend bool operator==(const HourInterval&, const HourInterval&) = default;
};

/// Per-hour prediction intervals plus a calibrated flag per 24-hour horizon block.
struct IntervalSet {
    std::vector<HourInterval> hours;
    std::vector<bool> block_calibrated;

    std::size_t size() const noexcept { return hours.size(); }
    bool calibrated_at(std::size_t hour_index) const { return block_calibrated.at(hour_index / 24); }

    friend bool operator==(const IntervalSet&, const IntervalSet&) = default;
};

/// One forecast issuance. `issue_day` is the first forecast day: hour 1 is issue_day 00:00 UTC.
struct ForecastRecord {
    std::string grid_id;
    Day issue_day{};
    std::vector<double> horizon;
    BackendDescriptor backend;
    std::optional<IntervalSet> interval;

    Timestamp target_time(std::size_t hour_index) const {
        return Timestamp(issue_day) + std::chrono::hours{static_cast<long>(hour_index)};
    }

    friend bool operator==(const ForecastRecord&, const ForecastRecord&) = default;
};

} // namespace cifcast
