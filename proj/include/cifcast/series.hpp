#pragma once

#include "cifcast/time.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cifcast {

enum class Resolution { hourly, five_minute };

std::chrono::seconds step_of(Resolution resolution) noexcept;
std::size_t steps_per_day(Resolution resolution) noexcept;
std::string_view to_string(Resolution resolution) noexcept;
Resolution parse_resolution(std::string_view text);

/// One generation source contributing to a grid's mix.
struct SourceEntry {
    std::string source;
    double generation_kwh = 0.0;
    double emission_factor = 0.0; // gCO2eq/kWh
};

using SourceMix = std::vector<SourceEntry>;

/// Generation-weighted mean of the per-source emission factors.
double compute_carbon_intensity(std::span<const SourceEntry> mix);

struct Window {
    std::size_t offset = 0;
    std::size_t length = 0;
};

/**
 * Hourly or 5-minute carbon-intensity sequence for one grid.
 *
 * Timestamps are implied by (start, resolution, index). Absent values are
 * missing observations, never sentinels. Present values are finite and
 * non-negative; the constructor rejects anything else. Instances are
 * immutable after construction.
 */
class CarbonSeries {
public:
    using Value = std::optional<double>;

    CarbonSeries() = default;
    CarbonSeries(std::string grid_id, Timestamp start, Resolution resolution,
                 std::vector<Value> values);

    static CarbonSeries dense(std::string grid_id, Timestamp start, Resolution resolution,
                              std::span<const double> values);

    const std::string& grid_id() const noexcept { return grid_id_; }
    Timestamp start() const noexcept { return start_; }
    Resolution resolution() const noexcept { return resolution_; }
    const std::vector<Value>& values() const noexcept { return values_; }

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    const Value& operator[](std::size_t i) const { return values_[i]; }

    Timestamp timestamp(std::size_t i) const;
    /// One step past the last value.
    Timestamp end() const { return timestamp(values_.size()); }
    /// Index of `t`; t must lie on the series grid (not necessarily in range).
    std::ptrdiff_t index_of(Timestamp t) const;

    std::size_t present_count() const noexcept;
    bool complete() const noexcept { return present_count() == values_.size(); }

    /// Values as plain doubles; throws AllMissing-style InvalidArgument if any are absent.
    std::vector<double> to_dense() const;

    friend bool operator==(const CarbonSeries&, const CarbonSeries&) = default;

private:
    std::string grid_id_;
    Timestamp start_{};
    Resolution resolution_ = Resolution::hourly;
    std::vector<Value> values_;
};

/// A series paired with its observation mask: mask[t] == 1 exactly where a value is present.
class MaskedSeries {
public:
    MaskedSeries() = default;
    MaskedSeries(CarbonSeries series, std::vector<std::uint8_t> mask);

    const CarbonSeries& series() const noexcept { return series_; }
    const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
    std::size_t size() const noexcept { return mask_.size(); }
    std::size_t observed_count() const noexcept;
    std::size_t missing_count() const noexcept { return size() - observed_count(); }

private:
    CarbonSeries series_;
    std::vector<std::uint8_t> mask_;
};

CarbonSeries slice(const CarbonSeries& series, Window window);

/// Sub-series covering [from, to); both bounds must sit on the series grid and inside it.
CarbonSeries slice_time(const CarbonSeries& series, Timestamp from, Timestamp to);

MaskedSeries missing_mask(const CarbonSeries& series);

/// Hide `truth` wherever mask[t] == 0. Used to build evaluation inputs.
MaskedSeries apply_mask(const CarbonSeries& truth, std::span<const std::uint8_t> mask);

/// Trims leading and trailing partial days of an hourly series.
CarbonSeries align_to_day_boundary(const CarbonSeries& series);

} // namespace cifcast
