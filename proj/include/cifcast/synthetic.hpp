#pragma once

#include "cifcast/series.hpp"

#include <cstdint>

namespace cifcast::synthetic {

/// mean + daily sinusoid + optional second sinusoid + linear trend + Gaussian noise,
/// clamped at 0. Hourly, starting at 00:00 UTC of `start`.
struct PeriodicParams {
    double mean = 400.0;
    double daily_amplitude = 100.0;
    double secondary_amplitude = 0.0;
    double secondary_period_hours = 24.0 * 7.0;
    double trend_per_day = 0.0;
    double noise_sigma = 0.0; // absolute, gCO2eq/kWh
    std::uint64_t seed = 1;
};

CarbonSeries periodic_grid(const std::string& grid_id, Day start, int days, const PeriodicParams& params);

/// Two-regime grid (renewable-rich vs fossil-heavy days) with a midday solar dip and
/// AR(1) noise. Regimes switch day-to-day with probability `switch_probability`.
struct VolatileParams {
    double low_mean = 150.0;
    double high_mean = 450.0;
    double solar_dip = 0.35; // fraction of the level removed at solar noon
    double switch_probability = 0.2;
    double noise_sigma = 25.0;
    double noise_persistence = 0.7;
    std::uint64_t seed = 1;
};

CarbonSeries volatile_renewable_grid(const std::string& grid_id, Day start, int days, const VolatileParams& params);

} // namespace cifcast::synthetic
