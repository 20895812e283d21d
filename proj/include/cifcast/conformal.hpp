#pragma once

#include "cifcast/forecast.hpp"

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cifcast::conformal {

/// Ledger capacity: four daily horizon blocks.
inline constexpr int kLedgerHours = 96;

struct ResidualEntry {
    Day issue_day{};
    double residual = 0.0; // actual - forecast

    friend bool operator==(const ResidualEntry&, const ResidualEntry&) = default;
};

/// Days of delay before the residuals of horizon day k (1-based) are usable.
using LagFunction = std::function<int(int horizon_day)>;

/// k - 1: block 2 is available from day d-1, block 4 from d-3.
int default_lag(int horizon_day) noexcept;

/**
 * Per-grid history of residuals, one queue per horizon hour (1..96), each sorted
 * by issue day with at most one entry per issue day.
 */
class ResidualLedger {
public:
    explicit ResidualLedger(std::string grid_id = {}, int window_days = 75);

    const std::string& grid_id() const noexcept { return grid_id_; }
    int window_days() const noexcept { return window_days_; }

    /// Queue for horizon hour `hour` (1-based).
    const std::vector<ResidualEntry>& queue(int hour) const;

    /// Insert or replace the entry for (hour, issue_day). No trimming.
    void put(int hour, Day issue_day, double residual);

    /// Keep only the `keep_days` most recent issue days in every queue.
    void trim(int keep_days);

    std::size_t total_entries() const noexcept;

    friend bool operator==(const ResidualLedger&, const ResidualLedger&) = default;

private:
    std::string grid_id_;
    int window_days_;
    std::array<std::vector<ResidualEntry>, kLedgerHours> queues_;
};

/// Coverage level in (0, 1); the interval uses the (1-a)/2 and (1+a)/2 residual quantiles.
struct CoverageTarget {
    double alpha = 0.95;

    double lower_probability() const noexcept { return (1.0 - alpha) / 2.0; }
    double upper_probability() const noexcept { return (1.0 + alpha) / 2.0; }
};

struct CalibrationConfig {
    int min_days = 10;            // qualifying issue days needed before a block is calibrated
    double fallback_width = 0.5;  // relative half-width of the uncalibrated interval
    LagFunction lag = default_lag;
};

/// Appends actual - forecast for every horizon hour covered by `actual` (present values only),
/// then trims queues to window_days plus the horizon length in days.
/// `actual` must start at the record's first target hour. Returns the number of residuals written.
std::size_t record_outcome(ResidualLedger& ledger, const ForecastRecord& record, const CarbonSeries& actual);

/// Residuals for `hour` from forecasts issued on or before as_of_day - lag(k), limited to the
/// window_days most recent such issue days. `as_of_day` is the last day whose ground truth is complete.
std::vector<double> available_residuals(const ResidualLedger& ledger, int hour, Day as_of_day,
                                        const LagFunction& lag = default_lag);

/// 1-based order-statistic rank ceil((m+1)p), clamped to [1, m].
std::size_t conformal_rank(std::size_t m, double p) noexcept;

/// Order statistic of `residuals` at conformal_rank(size, p).
double residual_quantile(std::vector<double> residuals, double p);

/// Intervals for a record whose first target day is record.issue_day; only residuals whose
/// ground truth precedes that day are read (as_of_day = issue_day - 1).
IntervalSet calibrate(const ResidualLedger& ledger, const ForecastRecord& record,
                      const CoverageTarget& target = {}, const CalibrationConfig& config = {});

struct CoverageSummary {
    double overall = 0.0;                  // fraction in [0, 1]
    std::array<double, 4> by_day{};        // hours 1-24, 25-48, 49-72, 73-96
    std::array<std::size_t, 4> hours_by_day{};
    std::size_t hours = 0;
};

/// Fraction of hours with known truth that fall inside their interval (inclusive bounds).
/// Each actual series must be as long as its interval set.
CoverageSummary coverage_probe(std::span<const IntervalSet> intervals, std::span<const CarbonSeries> actuals);

} // namespace cifcast::conformal
