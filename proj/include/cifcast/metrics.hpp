#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cifcast::metrics {

/// Hours with actual below this (gCO2eq/kWh) are left out of relative-error denominators.
inline constexpr double kEpsilon = 1.0;

struct MapeResult {
    double percent = 0.0;
    std::size_t evaluated = 0;
    std::size_t excluded = 0;
};

MapeResult mape(std::span<const double> actual, std::span<const double> forecast,
                double epsilon = kEpsilon);

struct Issuance {
    std::vector<double> actual;
    std::vector<double> forecast;
};

struct WindowMapes {
    double mean = 0.0;
    double p90 = 0.0;
    /// 90th percentile over individual hourly absolute percentage errors, for comparison.
    double hourly_p90 = 0.0;
    std::size_t issuances = 0;
};

/// Order statistic at ceil(p*n) (1-based, clamped to [1, n]) of an unsorted sample.
double order_statistic(std::vector<double> sample, double p);

/// Per-issuance MAPE, then mean and 90th percentile across issuances.
WindowMapes window_mapes(std::span<const Issuance> issuances, double epsilon = kEpsilon);
/// OpenMP kernel with identical results; the serial version above is the reference.
WindowMapes window_mapes_parallel(std::span<const Issuance> issuances, double epsilon = kEpsilon);

double coverage(std::span<const double> actual, std::span<const double> lower,
                std::span<const double> upper);

double niw(std::span<const double> actual, std::span<const double> lower,
           std::span<const double> upper, double epsilon = kEpsilon);

struct NormStats {
    double mean = 0.0;
    double std = 0.0;
};

/// Mean and population standard deviation.
NormStats norm_stats(std::span<const double> values);

double normalized_rmse(std::span<const double> truth, std::span<const double> estimate,
                       std::span<const std::size_t> positions, NormStats stats);

} // namespace cifcast::metrics
