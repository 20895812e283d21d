#include "cifcast/synthetic.hpp"

#include "cifcast/error.hpp"
#include "cifcast/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cifcast::synthetic {

CarbonSeries periodic_grid(const std::string& grid_id, Day start, int days, const PeriodicParams& p) {
    if (days <= 0)
        throw Error(ErrorCode::InvalidArgument, "synthetic grid needs a positive number of days");
    SplitMix64 rng(p.seed);
    const auto n = static_cast<std::size_t>(days) * 24;
    std::vector<double> values(n);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t t = 0; t < n; ++t) {
        const double hour = static_cast<double>(t);
        // Phase from the hour of day so the daily term repeats bit-for-bit.
        const double hour_of_day = static_cast<double>(t % 24);
        double v = p.mean + p.daily_amplitude * std::sin(two_pi * (hour_of_day - 6.0) / 24.0) +
                   p.trend_per_day * hour / 24.0;
        if (p.secondary_amplitude != 0.0)
            v += p.secondary_amplitude * std::sin(two_pi * hour / p.secondary_period_hours);
        if (p.noise_sigma > 0.0)
            v += p.noise_sigma * rng.normal();
        values[t] = std::max(0.0, v);
    }
    return CarbonSeries::dense(grid_id, Timestamp(start), Resolution::hourly, values);
}

CarbonSeries volatile_renewable_grid(const std::string& grid_id, Day start, int days, const VolatileParams& p) {
    if (days <= 0)
        throw Error(ErrorCode::InvalidArgument, "synthetic grid needs a positive number of days");
    SplitMix64 rng(p.seed);
    std::vector<double> values(static_cast<std::size_t>(days) * 24);
    bool renewable = false;
    double noise = 0.0;
    const double innovation = p.noise_sigma * std::sqrt(1.0 - p.noise_persistence * p.noise_persistence);
    for (int d = 0; d < days; ++d) {
        if (rng.uniform() < p.switch_probability)
            renewable = !renewable;
        const double level = renewable ? p.low_mean : p.high_mean;
        for (int h = 0; h < 24; ++h) {
            // Solar dip centred on 12:00, zero outside 06:00-18:00.
            const double solar = std::max(0.0, std::sin(std::numbers::pi * (h - 6) / 12.0));
            noise = p.noise_persistence * noise + innovation * rng.normal();
            values[static_cast<std::size_t>(d * 24 + h)] = std::max(0.0, level * (1.0 - p.solar_dip * solar) + noise);
        }
    }
    return CarbonSeries::dense(grid_id, Timestamp(start), Resolution::hourly, values);
}

} // namespace cifcast::synthetic
