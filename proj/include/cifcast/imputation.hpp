#pragma once

#include "cifcast/series.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace cifcast::imputation {

/// Random fixed-length patch masking. Patches never overlap or touch.
struct MaskPlan {
    double target_fraction = 0.5;
    std::size_t patch_length = 4;
    std::uint64_t seed = 0;
};

/// Default patch length: one hour of 5-minute data, four hours of hourly data.
std::size_t default_patch_length(Resolution resolution) noexcept;

struct GeneratedMask {
    std::vector<std::uint8_t> mask; // 1 = observed, 0 = hidden
    std::size_t masked_count = 0;
    double achieved_fraction = 0.0;
};

GeneratedMask generate_mask(std::size_t length, const MaskPlan& plan);

CarbonSeries impute_naive(const MaskedSeries& masked);
CarbonSeries impute_linear(const MaskedSeries& masked);
CarbonSeries impute_cubic_spline(const MaskedSeries& masked);

/// Dispatch by method name: "naive", "linear" or "cubic-spline".
CarbonSeries impute_native(std::string_view method, const MaskedSeries& masked);
bool is_native_method(std::string_view method) noexcept;

/// Natural cubic spline through strictly increasing knots (zero curvature at both ends).
class NaturalCubicSpline {
public:
    NaturalCubicSpline(std::vector<double> x, std::vector<double> y);

    double operator()(double x) const;

    /// Derivative `order` (0..2) of the cubic piece on [x_seg, x_seg+1], evaluated at x.
    /// Lets callers take one-sided limits at a knot.
    double piece(std::size_t segment, double x, int order = 0) const;

    std::size_t segments() const noexcept { return x_.size() - 1; }
    const std::vector<double>& knots() const noexcept { return x_; }
    const std::vector<double>& second_derivatives() const noexcept { return m_; }

private:
    std::size_t segment_of(double x) const;

    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_;
};

/// Normalized RMSE of `method` over the masked positions, z-scored with the
/// statistics of the observed positions.
double evaluate_imputation(const CarbonSeries& truth, const MaskedSeries& masked,
                           std::string_view method);

/// Same, for an already-imputed estimate (used with remote backends).
double evaluate_estimate(const CarbonSeries& truth, const MaskedSeries& masked,
                         const CarbonSeries& estimate);

} // namespace cifcast::imputation
