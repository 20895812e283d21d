#include "cifcast/conformal.hpp"

#include "cifcast/error.hpp"

#include <algorithm>
#include <cmath>

namespace cifcast::conformal {

namespace {

void check_hour(int hour) {
    if (hour < 1 || hour > kLedgerHours)
        throw Error(ErrorCode::OutOfBounds, "horizon hour " + std::to_string(hour) + " outside 1..96");
}

int horizon_day_of(int hour) noexcept { return (hour + 23) / 24; }

} // namespace

int default_lag(int horizon_day) noexcept { return horizon_day - 1; }

ResidualLedger::ResidualLedger(std::string grid_id, int window_days)
    : grid_id_(std::move(grid_id)), window_days_(window_days) {
    if (window_days_ <= 0)
        throw Error(ErrorCode::InvalidArgument, "calibration window must be positive");
}

const std::vector<ResidualEntry>& ResidualLedger::queue(int hour) const {
    check_hour(hour);
    return queues_[static_cast<std::size_t>(hour - 1)];
}

void ResidualLedger::put(int hour, Day issue_day, double residual) {
    check_hour(hour);
    if (!std::isfinite(residual))
        throw Error(ErrorCode::InvalidArgument, "residuals must be finite");
    auto& q = queues_[static_cast<std::size_t>(hour - 1)];
    auto it = std::lower_bound(q.begin(), q.end(), issue_day,
                               [](const ResidualEntry& e, Day d) { return e.issue_day < d; });
    if (it != q.end() && it->issue_day == issue_day)
        it->residual = residual;
    else
        q.insert(it, ResidualEntry{issue_day, residual});
}

void ResidualLedger::trim(int keep_days) {
    if (keep_days <= 0)
        return;
    for (auto& q : queues_) {
        const auto keep = static_cast<std::size_t>(keep_days);
        if (q.size() > keep)
            q.erase(q.begin(), q.end() - static_cast<std::ptrdiff_t>(keep));
    }
}

std::size_t ResidualLedger::total_entries() const noexcept {
    std::size_t n = 0;
    for (const auto& q : queues_)
        n += q.size();
    return n;
}

// ---------------------------------------------------------------------------

std::size_t record_outcome(ResidualLedger& ledger, const ForecastRecord& record, const CarbonSeries& actual) {
    if (record.grid_id != actual.grid_id() || (!ledger.grid_id().empty() && ledger.grid_id() != record.grid_id))
        throw Error(ErrorCode::GridMismatch, "record for grid '" + record.grid_id + "', actual for '" +
                                                 actual.grid_id() + "', ledger for '" + ledger.grid_id() + "'");
    if (actual.resolution() != Resolution::hourly)
        throw Error(ErrorCode::ResolutionMismatch, "residuals are recorded from hourly actuals only");
    if (actual.start() != record.target_time(0))
        throw Error(ErrorCode::InvalidArgument, "actual starts at " + format_timestamp(actual.start()) +
                                                    ", forecast at " + format_timestamp(record.target_time(0)));

    const std::size_t hours =
        std::min({actual.size(), record.horizon.size(), static_cast<std::size_t>(kLedgerHours)});
    std::size_t written = 0;
    for (std::size_t i = 0; i < hours; ++i) {
        if (!actual[i])
            continue;
        ledger.put(static_cast<int>(i) + 1, record.issue_day, *actual[i] - record.horizon[i]);
        ++written;
    }
    ledger.trim(ledger.window_days() + kLedgerHours / 24);
    return written;
}

std::vector<double> available_residuals(const ResidualLedger& ledger, int hour, Day as_of_day,
                                        const LagFunction& lag) {
    const auto& q = ledger.queue(hour);
    const Day cutoff = as_of_day - std::chrono::days{lag(horizon_day_of(hour))};
    // q is sorted by issue day, one entry per day.
    const auto end = std::upper_bound(q.begin(), q.end(), cutoff,
                                      [](Day d, const ResidualEntry& e) { return d < e.issue_day; });
    const auto window = static_cast<std::ptrdiff_t>(ledger.window_days());
    const auto begin = (end - q.begin()) > window ? end - window : q.begin();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(end - begin));
    for (auto it = begin; it != end; ++it)
        out.push_back(it->residual);
    return out;
}

std::size_t conformal_rank(std::size_t m, double p) noexcept {
    if (m == 0)
        return 0;
    const double x = static_cast<double>(m + 1) * p;
    // Absorb representation error in p (0.975 * 40 must give 39, not 40).
    const double r = std::ceil(x - 1e-9 * std::max(1.0, x));
    if (r < 1.0)
        return 1;
    if (r > static_cast<double>(m))
        return m;
    return static_cast<std::size_t>(r);
}

double residual_quantile(std::vector<double> residuals, double p) {
    if (residuals.empty())
        throw Error(ErrorCode::InvalidArgument, "quantile of an empty residual set");
    const std::size_t k = conformal_rank(residuals.size(), p) - 1;
    std::nth_element(residuals.begin(), residuals.begin() + static_cast<std::ptrdiff_t>(k), residuals.end());
    return residuals[k];
}

IntervalSet calibrate(const ResidualLedger& ledger, const ForecastRecord& record, const CoverageTarget& target,
                      const CalibrationConfig& config) {
    if (!(target.alpha > 0.0 && target.alpha < 1.0))
        throw Error(ErrorCode::InvalidArgument, "coverage level must lie in (0, 1)");
    const std::size_t n = record.horizon.size();
    if (n > static_cast<std::size_t>(kLedgerHours))
        throw Error(ErrorCode::HorizonTooLong, "intervals are calibrated for at most 96 hours");

    const Day as_of = record.issue_day - std::chrono::days{1};
    std::vector<std::vector<double>> residuals(n);
    for (std::size_t i = 0; i < n; ++i)
        residuals[i] = available_residuals(ledger, static_cast<int>(i) + 1, as_of, config.lag);

    IntervalSet out;
    out.hours.resize(n);
    out.block_calibrated.assign((n + 23) / 24, true);
    for (std::size_t i = 0; i < n; ++i)
        if (residuals[i].size() < static_cast<std::size_t>(std::max(config.min_days, 1)))
            out.block_calibrated[i / 24] = false;

    for (std::size_t i = 0; i < n; ++i) {
        const double yhat = record.horizon[i];
        auto& iv = out.hours[i];
        if (out.block_calibrated[i / 24]) {
            const double q_lo = residual_quantile(residuals[i], target.lower_probability());
            const double q_hi = residual_quantile(std::move(residuals[i]), target.upper_probability());
            iv.lower = std::max(0.0, yhat + q_lo);
            iv.upper = std::max(iv.lower, yhat + q_hi);
        } else {
            iv.lower = std::max(0.0, yhat * (1.0 - config.fallback_width));
            iv.upper = std::max(iv.lower, yhat * (1.0 + config.fallback_width));
        }
    }
    return out;
}

CoverageSummary coverage_probe(std::span<const IntervalSet> intervals, std::span<const CarbonSeries> actuals) {
    if (intervals.size() != actuals.size())
        throw Error(ErrorCode::LengthMismatch, "interval and actual counts differ");
    CoverageSummary s;
    std::array<std::size_t, 4> inside{};
    for (std::size_t r = 0; r < intervals.size(); ++r) {
        const auto& iv = intervals[r];
        const auto& y = actuals[r];
        if (iv.size() != y.size())
            throw Error(ErrorCode::LengthMismatch, "interval set " + std::to_string(r) + " has " +
                                                       std::to_string(iv.size()) + " hours, actual " +
                                                       std::to_string(y.size()));
        for (std::size_t i = 0; i < iv.size() && i < static_cast<std::size_t>(kLedgerHours); ++i) {
            if (!y[i])
                continue;
            const std::size_t day = i / 24;
            ++s.hours_by_day[day];
            if (iv.hours[i].lower <= *y[i] && *y[i] <= iv.hours[i].upper)
                ++inside[day];
        }
    }
    std::size_t total_in = 0;
    for (std::size_t d = 0; d < 4; ++d) {
        s.hours += s.hours_by_day[d];
        total_in += inside[d];
        s.by_day[d] = s.hours_by_day[d] ? static_cast<double>(inside[d]) / static_cast<double>(s.hours_by_day[d]) : 0.0;
    }
    s.overall = s.hours ? static_cast<double>(total_in) / static_cast<double>(s.hours) : 0.0;
    return s;
}

} // namespace cifcast::conformal
