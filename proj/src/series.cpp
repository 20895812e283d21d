#include "cifcast/series.hpp"

#include "cifcast/error.hpp"

#include <algorithm>
#include <cmath>

namespace cifcast {

std::chrono::seconds step_of(Resolution resolution) noexcept {
    return resolution == Resolution::hourly ? std::chrono::seconds{3600} : std::chrono::seconds{300};
}

std::size_t steps_per_day(Resolution resolution) noexcept {
    return resolution == Resolution::hourly ? 24 : 288;
}

std::string_view to_string(Resolution resolution) noexcept {
    return resolution == Resolution::hourly ? "hourly" : "five_minute";
}

Resolution parse_resolution(std::string_view text) {
    if (text == "hourly" || text == "1h")
        return Resolution::hourly;
    if (text == "five_minute" || text == "5min")
        return Resolution::five_minute;
    throw Error(ErrorCode::InvalidArgument, "unknown resolution '" + std::string(text) + "'");
}

double compute_carbon_intensity(std::span<const SourceEntry> mix) {
    double weighted = 0.0;
    double total = 0.0;
    for (const auto& e : mix) {
        if (!(e.generation_kwh >= 0.0) || !(e.emission_factor >= 0.0) ||
            !std::isfinite(e.generation_kwh) || !std::isfinite(e.emission_factor))
            throw Error(ErrorCode::InvalidArgument,
                        "source '" + e.source + "' has negative or non-finite generation/factor");
        weighted += e.generation_kwh * e.emission_factor;
        total += e.generation_kwh;
    }
    if (total <= 0.0)
        throw Error(ErrorCode::ZeroGeneration, "source mix has no generation");
    return weighted / total;
}

// ---------------------------------------------------------------------------
// CarbonSeries

CarbonSeries::CarbonSeries(std::string grid_id, Timestamp start, Resolution resolution,
                           std::vector<Value> values)
    : grid_id_(std::move(grid_id)), start_(start), resolution_(resolution), values_(std::move(values)) {
    if (start_.time_since_epoch() % step_of(resolution_) != std::chrono::seconds{0})
        throw Error(ErrorCode::InvalidArgument,
                    "series start " + format_timestamp(start_) + " is not aligned to its resolution");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const auto& v = values_[i];
        if (v && (!std::isfinite(*v) || *v < 0.0))
            throw Error(ErrorCode::InvalidArgument,
                        "grid '" + grid_id_ + "': value at " + format_timestamp(timestamp(i)) +
                            " is negative or non-finite");
    }
}

CarbonSeries CarbonSeries::dense(std::string grid_id, Timestamp start, Resolution resolution,
                                 std::span<const double> values) {
    std::vector<Value> v(values.begin(), values.end());
    return CarbonSeries(std::move(grid_id), start, resolution, std::move(v));
}

Timestamp CarbonSeries::timestamp(std::size_t i) const {
    return start_ + step_of(resolution_) * static_cast<std::int64_t>(i);
}

std::ptrdiff_t CarbonSeries::index_of(Timestamp t) const {
    const auto delta = t - start_;
    const auto step = step_of(resolution_);
    if (delta % step != std::chrono::seconds{0})
        throw Error(ErrorCode::InvalidArgument, format_timestamp(t) + " is off the series grid");
    return static_cast<std::ptrdiff_t>(delta / step);
}

std::size_t CarbonSeries::present_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(values_.begin(), values_.end(), [](const Value& v) { return v.has_value(); }));
}

std::vector<double> CarbonSeries::to_dense() const {
    std::vector<double> out;
    out.reserve(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!values_[i])
            throw Error(ErrorCode::InvalidArgument, "grid '" + grid_id_ + "': missing value at " +
                                                        format_timestamp(timestamp(i)));
        out.push_back(*values_[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// MaskedSeries

MaskedSeries::MaskedSeries(CarbonSeries series, std::vector<std::uint8_t> mask)
    : series_(std::move(series)), mask_(std::move(mask)) {
    if (mask_.size() != series_.size())
        throw Error(ErrorCode::LengthMismatch, "mask length " + std::to_string(mask_.size()) +
                                                   " != series length " +
                                                   std::to_string(series_.size()));
    for (std::size_t i = 0; i < mask_.size(); ++i) {
        if (mask_[i] > 1)
            throw Error(ErrorCode::InvalidArgument, "mask entries must be 0 or 1");
        if ((mask_[i] == 1) != series_[i].has_value())
            throw Error(ErrorCode::InvalidArgument,
                        "mask disagrees with value presence at index " + std::to_string(i));
    }
}

std::size_t MaskedSeries::observed_count() const noexcept {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

// ---------------------------------------------------------------------------

CarbonSeries slice(const CarbonSeries& series, Window window) {
    if (window.offset > series.size() || window.length > series.size() - window.offset)
        throw Error(ErrorCode::OutOfBounds,
                    "window(" + std::to_string(window.offset) + "," + std::to_string(window.length) +
                        ") exceeds series of length " + std::to_string(series.size()));
    const auto first = series.values().begin() + static_cast<std::ptrdiff_t>(window.offset);
    std::vector<CarbonSeries::Value> values(first, first + static_cast<std::ptrdiff_t>(window.length));
    return CarbonSeries(series.grid_id(), series.timestamp(window.offset), series.resolution(),
                        std::move(values));
}

CarbonSeries slice_time(const CarbonSeries& series, Timestamp from, Timestamp to) {
    const auto a = series.index_of(from);
    const auto b = series.index_of(to);
    if (a < 0 || b < a)
        throw Error(ErrorCode::OutOfBounds, "time range [" + format_timestamp(from) + ", " +
                                                format_timestamp(to) + ") outside series");
    return slice(series, Window{static_cast<std::size_t>(a), static_cast<std::size_t>(b - a)});
}

MaskedSeries missing_mask(const CarbonSeries& series) {
    std::vector<std::uint8_t> mask(series.size());
    for (std::size_t i = 0; i < series.size(); ++i)
        mask[i] = series[i].has_value() ? 1 : 0;
    return MaskedSeries(series, std::move(mask));
}

MaskedSeries apply_mask(const CarbonSeries& truth, std::span<const std::uint8_t> mask) {
    if (mask.size() != truth.size())
        throw Error(ErrorCode::LengthMismatch, "mask length does not match series length");
    std::vector<CarbonSeries::Value> values(truth.size());
    std::vector<std::uint8_t> m(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask[i] && truth[i]) {
            values[i] = truth[i];
            m[i] = 1;
        }
    }
    return MaskedSeries(CarbonSeries(truth.grid_id(), truth.start(), truth.resolution(), std::move(values)),
                        std::move(m));
}

CarbonSeries align_to_day_boundary(const CarbonSeries& series) {
    if (series.resolution() != Resolution::hourly)
        throw Error(ErrorCode::InvalidArgument, "day alignment requires an hourly series");
    const auto hour = std::chrono::duration_cast<std::chrono::hours>(time_of_day(series.start())).count();
    const std::size_t lead = hour == 0 ? 0 : static_cast<std::size_t>(24 - hour);
    if (series.size() < lead + 24)
        throw Error(ErrorCode::TooShort, "fewer than 24 day-aligned values in series '" +
                                             series.grid_id() + "'");
    const std::size_t full_days = (series.size() - lead) / 24;
    return slice(series, Window{lead, full_days * 24});
}

} // namespace cifcast
