#include "cifcast/imputation.hpp"

#include "cifcast/error.hpp"
#include "cifcast/metrics.hpp"
#include "cifcast/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cifcast::imputation {

namespace {

struct Observed {
    std::vector<std::size_t> index;
    std::vector<double> value;
};

Observed observed_points(const MaskedSeries& masked) {
    Observed obs;
    const auto& s = masked.series();
    for (std::size_t i = 0; i < masked.size(); ++i) {
        if (masked.mask()[i]) {
            obs.index.push_back(i);
            obs.value.push_back(*s[i]);
        }
    }
    if (obs.index.empty())
        throw Error(ErrorCode::AllMissing, "series '" + s.grid_id() + "' has no observed values");
    return obs;
}

CarbonSeries with_values(const MaskedSeries& masked, std::vector<double> filled) {
    const auto& s = masked.series();
    std::vector<CarbonSeries::Value> values(filled.size());
    for (std::size_t i = 0; i < filled.size(); ++i)
        values[i] = masked.mask()[i] ? *s[i] : std::max(0.0, filled[i]);
    return CarbonSeries(s.grid_id(), s.start(), s.resolution(), std::move(values));
}

// Straight line through (a, ya) and (b, yb) evaluated at x.
double chord(double a, double ya, double b, double yb, double x) {
    return (ya * (b - x) + yb * (x - a)) / (b - a);
}

// Nearest element of sorted `candidates` to `i`, which is not itself a candidate.
// Ties go to the past.
std::optional<std::size_t> nearest(const std::vector<std::size_t>& candidates, std::size_t i) {
    const auto it = std::lower_bound(candidates.begin(), candidates.end(), i);
    const bool has_past = it != candidates.begin();
    const bool has_future = it != candidates.end();
    if (has_past && has_future) {
        const std::size_t past = *std::prev(it);
        return (i - past) <= (*it - i) ? past : *it;
    }
    if (has_past)
        return *std::prev(it);
    if (has_future)
        return *it;
    return std::nullopt;
}

} // namespace

std::size_t default_patch_length(Resolution resolution) noexcept {
    return resolution == Resolution::hourly ? 4 : 12;
}

GeneratedMask generate_mask(std::size_t length, const MaskPlan& plan) {
    if (!(plan.target_fraction > 0.0 && plan.target_fraction < 1.0))
        throw Error(ErrorCode::InvalidArgument, "mask fraction must lie in (0, 1)");
    if (plan.patch_length == 0 || length == 0)
        throw Error(ErrorCode::InvalidArgument, "mask length and patch length must be positive");
    const std::size_t p = plan.patch_length;
    if (p >= length)
        throw Error(ErrorCode::InfeasibleTarget,
                    "patch length " + std::to_string(p) + " leaves no observation in length " +
                        std::to_string(length));

    const auto target = static_cast<std::size_t>(std::floor(plan.target_fraction * static_cast<double>(length)));
    const std::size_t patches = std::max<std::size_t>(1, (target + p - 1) / p);
    // Each patch is followed by one observed separator step; the last separator may
    // fall just past the end, hence the +1.
    if (patches * (p + 1) > length + 1 || patches * p >= length)
        throw Error(ErrorCode::InfeasibleTarget,
                    std::to_string(patches) + " disjoint patches of " + std::to_string(p) +
                        " do not fit in length " + std::to_string(length));

    // Uniform over all placements: choose which of the (free + patches) units are patches.
    const std::size_t free_cells = length + 1 - patches * (p + 1);
    const std::size_t units = free_cells + patches;
    SplitMix64 rng(plan.seed);
    std::vector<std::size_t> order(units);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = 0; k < patches; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng.below(units - k));
        std::swap(order[k], order[j]);
    }
    std::vector<bool> is_patch(units, false);
    for (std::size_t k = 0; k < patches; ++k)
        is_patch[order[k]] = true;

    GeneratedMask out;
    out.mask.assign(length, 1);
    std::size_t pos = 0;
    for (std::size_t u = 0; u < units; ++u) {
        if (is_patch[u]) {
            std::fill_n(out.mask.begin() + static_cast<std::ptrdiff_t>(pos), p, std::uint8_t{0});
            pos += p + 1;
        } else {
            pos += 1;
        }
    }
    out.masked_count = patches * p;
    out.achieved_fraction = static_cast<double>(out.masked_count) / static_cast<double>(length);
    return out;
}

CarbonSeries impute_naive(const MaskedSeries& masked) {
    const Observed obs = observed_points(masked);
    const std::size_t period = steps_per_day(masked.series().resolution());

    std::vector<std::vector<std::size_t>> by_slot(period);
    for (std::size_t i : obs.index)
        by_slot[i % period].push_back(i);

    std::vector<double> filled(masked.size(), 0.0);
    const auto& s = masked.series();
    for (std::size_t i = 0; i < masked.size(); ++i) {
        if (masked.mask()[i])
            continue;
        auto src = nearest(by_slot[i % period], i);
        if (!src)
            src = nearest(obs.index, i);
        filled[i] = *s[*src];
    }
    return with_values(masked, std::move(filled));
}

CarbonSeries impute_linear(const MaskedSeries& masked) {
    const Observed obs = observed_points(masked);
    std::vector<double> filled(masked.size(), 0.0);
    std::size_t next = 0; // first observed index > i
    for (std::size_t i = 0; i < masked.size(); ++i) {
        while (next < obs.index.size() && obs.index[next] <= i)
            ++next;
        if (masked.mask()[i])
            continue;
        if (next == 0) {
            filled[i] = obs.value.front();
        } else if (next == obs.index.size()) {
            filled[i] = obs.value.back();
        } else {
            filled[i] = chord(double(obs.index[next - 1]), obs.value[next - 1], double(obs.index[next]),
                              obs.value[next], double(i));
        }
    }
    return with_values(masked, std::move(filled));
}

CarbonSeries impute_cubic_spline(const MaskedSeries& masked) {
    const Observed obs = observed_points(masked);
    if (obs.index.size() < 3)
        return impute_linear(masked);
    std::vector<double> x(obs.index.begin(), obs.index.end());
    const NaturalCubicSpline spline(std::move(x), obs.value);

    std::vector<double> filled(masked.size(), 0.0);
    for (std::size_t i = 0; i < masked.size(); ++i) {
        if (masked.mask()[i])
            continue;
        if (i < obs.index.front())
            filled[i] = obs.value.front();
        else if (i > obs.index.back())
            filled[i] = obs.value.back();
        else
            filled[i] = spline(double(i));
    }
    return with_values(masked, std::move(filled));
}

bool is_native_method(std::string_view method) noexcept {
    return method == "naive" || method == "linear" || method == "cubic-spline";
}

CarbonSeries impute_native(std::string_view method, const MaskedSeries& masked) {
    if (method == "naive")
        return impute_naive(masked);
    if (method == "linear")
        return impute_linear(masked);
    if (method == "cubic-spline")
        return impute_cubic_spline(masked);
    throw Error(ErrorCode::UnknownModel, "unknown imputation method '" + std::string(method) + "'");
}

// ---------------------------------------------------------------------------
// NaturalCubicSpline

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n)
        throw Error(ErrorCode::InvalidArgument, "spline needs at least two knots with values");
    for (std::size_t i = 1; i < n; ++i)
        if (!(x_[i] > x_[i - 1]))
            throw Error(ErrorCode::InvalidArgument, "spline knots must be strictly increasing");

    m_.assign(n, 0.0);
    if (n == 2)
        return;
    // Tridiagonal system for the interior second derivatives, solved by forward
    // elimination and back substitution. M_0 = M_{n-1} = 0.
    const std::size_t k = n - 2;
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h0 = x_[i] - x_[i - 1];
        const double h1 = x_[i + 1] - x_[i];
        diag[i - 1] = (h0 + h1) / 3.0;
        upper[i - 1] = h1 / 6.0;
        rhs[i - 1] = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
    }
    for (std::size_t i = 1; i < k; ++i) {
        const double lower = (x_[i + 1] - x_[i]) / 6.0; // h_{i} on row i
        const double w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m_[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t i = k - 1; i >= 1; --i)
        m_[i] = (rhs[i - 1] - upper[i - 1] * m_[i + 1]) / diag[i - 1];
}

std::size_t NaturalCubicSpline::segment_of(double x) const {
    if (x <= x_.front())
        return 0;
    if (x >= x_.back())
        return x_.size() - 2;
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    return static_cast<std::size_t>(it - x_.begin()) - 1;
}

double NaturalCubicSpline::operator()(double x) const {
    const std::size_t j = segment_of(x);
    // h^3/h - h*h need not cancel in floating point; knots return their data exactly.
    if (x == x_[j])
        return y_[j];
    if (x == x_[j + 1])
        return y_[j + 1];
    return piece(j, x, 0);
}

double NaturalCubicSpline::piece(std::size_t j, double x, int order) const {
    if (j + 1 >= x_.size())
        throw Error(ErrorCode::OutOfBounds, "spline segment out of range");
    const double h = x_[j + 1] - x_[j];
    const double a = x_[j + 1] - x; // distance to right knot
    const double b = x - x_[j];     // distance to left knot
    const double m0 = m_[j];
    const double m1 = m_[j + 1];
    switch (order) {
    case 0:
        // Chord plus cubic correction; the correction vanishes identically when m0 = m1 = 0.
        return chord(x_[j], y_[j], x_[j + 1], y_[j + 1], x) +
               m0 / 6.0 * (a * a * a / h - h * a) + m1 / 6.0 * (b * b * b / h - h * b);
    case 1:
        return (y_[j + 1] - y_[j]) / h + m0 / 6.0 * (h - 3.0 * a * a / h) +
               m1 / 6.0 * (3.0 * b * b / h - h);
    case 2:
        return (m0 * a + m1 * b) / h;
    default:
        throw Error(ErrorCode::InvalidArgument, "spline derivative order must be 0, 1 or 2");
    }
}

// ---------------------------------------------------------------------------

double evaluate_estimate(const CarbonSeries& truth, const MaskedSeries& masked,
                         const CarbonSeries& estimate) {
    if (truth.size() != masked.size() || estimate.size() != masked.size())
        throw Error(ErrorCode::LengthMismatch, "truth, mask and estimate lengths differ");
    const std::vector<double> t = truth.to_dense();
    const std::vector<double> e = estimate.to_dense();

    std::vector<std::size_t> hidden;
    std::vector<double> observed;
    for (std::size_t i = 0; i < masked.size(); ++i) {
        if (masked.mask()[i])
            observed.push_back(t[i]);
        else
            hidden.push_back(i);
    }
    if (hidden.empty())
        throw Error(ErrorCode::NoMaskedPositions, "mask hides nothing");
    return metrics::normalized_rmse(t, e, hidden, metrics::norm_stats(observed));
}

double evaluate_imputation(const CarbonSeries& truth, const MaskedSeries& masked,
                           std::string_view method) {
    if (masked.missing_count() == 0)
        throw Error(ErrorCode::NoMaskedPositions, "mask hides nothing");
    return evaluate_estimate(truth, masked, impute_native(method, masked));
}

} // namespace cifcast::imputation
