#include "cifcast/metrics.hpp"

#include "cifcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cifcast::metrics {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw Error(ErrorCode::LengthMismatch, std::string(what) + ": length " + std::to_string(a) +
                                                   " vs " + std::to_string(b));
}

struct IssuanceError {
    double mape = 0.0;
    std::vector<double> hourly;
};

IssuanceError score_issuance(const Issuance& is, double epsilon) {
    require_same_length(is.actual.size(), is.forecast.size(), "issuance");
    IssuanceError out;
    out.mape = mape(is.actual, is.forecast, epsilon).percent;
    for (std::size_t t = 0; t < is.actual.size(); ++t)
        if (is.actual[t] >= epsilon)
            out.hourly.push_back(100.0 * std::abs(is.actual[t] - is.forecast[t]) / is.actual[t]);
    return out;
}

WindowMapes summarize(std::vector<IssuanceError>& errors) {
    WindowMapes out;
    out.issuances = errors.size();
    if (errors.empty())
        return out;
    std::vector<double> per_issue;
    std::vector<double> hourly;
    per_issue.reserve(errors.size());
    for (auto& e : errors) {
        per_issue.push_back(e.mape);
        hourly.insert(hourly.end(), e.hourly.begin(), e.hourly.end());
    }
    double sum = 0.0;
    for (double m : per_issue)
        sum += m;
    out.mean = sum / static_cast<double>(per_issue.size());
    out.p90 = order_statistic(std::move(per_issue), 0.9);
    out.hourly_p90 = hourly.empty() ? 0.0 : order_statistic(std::move(hourly), 0.9);
    return out;
}

} // namespace

MapeResult mape(std::span<const double> actual, std::span<const double> forecast, double epsilon) {
    require_same_length(actual.size(), forecast.size(), "mape");
    MapeResult r;
    double sum = 0.0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        if (actual[t] < epsilon) {
            ++r.excluded;
            continue;
        }
        sum += std::abs(actual[t] - forecast[t]) / actual[t];
        ++r.evaluated;
    }
    if (r.evaluated == 0)
        throw Error(ErrorCode::AllBelowEpsilon, "no hour has actual >= epsilon");
    r.percent = 100.0 * sum / static_cast<double>(r.evaluated);
    return r;
}

double order_statistic(std::vector<double> sample, double p) {
    if (sample.empty())
        throw Error(ErrorCode::InvalidArgument, "order statistic of an empty sample");
    const double n = static_cast<double>(sample.size());
    const double x = p * n;
    auto rank = static_cast<std::ptrdiff_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
    rank = std::clamp<std::ptrdiff_t>(rank, 1, static_cast<std::ptrdiff_t>(sample.size()));
    std::nth_element(sample.begin(), sample.begin() + (rank - 1), sample.end());
    return sample[static_cast<std::size_t>(rank - 1)];
}

WindowMapes window_mapes(std::span<const Issuance> issuances, double epsilon) {
    std::vector<IssuanceError> errors;
    errors.reserve(issuances.size());
    for (const auto& is : issuances)
        errors.push_back(score_issuance(is, epsilon));
    return summarize(errors);
}

WindowMapes window_mapes_parallel(std::span<const Issuance> issuances, double epsilon) {
    std::vector<IssuanceError> errors(issuances.size());
    const auto n = static_cast<std::ptrdiff_t>(issuances.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            errors[static_cast<std::size_t>(i)] = score_issuance(issuances[static_cast<std::size_t>(i)], epsilon);
        } catch (...) {
#pragma omp critical(cifcast_window_mapes)
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
    return summarize(errors);
}

double coverage(std::span<const double> actual, std::span<const double> lower,
                std::span<const double> upper) {
    require_same_length(actual.size(), lower.size(), "coverage");
    require_same_length(actual.size(), upper.size(), "coverage");
    if (actual.empty())
        throw Error(ErrorCode::InvalidArgument, "coverage of an empty window");
    std::size_t inside = 0;
    for (std::size_t t = 0; t < actual.size(); ++t)
        if (lower[t] <= actual[t] && actual[t] <= upper[t])
            ++inside;
    return 100.0 * static_cast<double>(inside) / static_cast<double>(actual.size());
}

double niw(std::span<const double> actual, std::span<const double> lower,
           std::span<const double> upper, double epsilon) {
    require_same_length(actual.size(), lower.size(), "niw");
    require_same_length(actual.size(), upper.size(), "niw");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < actual.size(); ++t) {
        if (actual[t] < epsilon)
            continue;
        sum += (upper[t] - lower[t]) / actual[t];
        ++n;
    }
    if (n == 0)
        throw Error(ErrorCode::AllBelowEpsilon, "no hour has actual >= epsilon");
    return 100.0 * sum / static_cast<double>(n);
}

NormStats norm_stats(std::span<const double> values) {
    if (values.empty())
        throw Error(ErrorCode::InvalidArgument, "normalization statistics of an empty sample");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values)
        ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

double normalized_rmse(std::span<const double> truth, std::span<const double> estimate,
                       std::span<const std::size_t> positions, NormStats stats) {
    require_same_length(truth.size(), estimate.size(), "normalized_rmse");
    if (!(stats.std > 0.0))
        throw Error(ErrorCode::DegenerateSeries, "zero-variance series cannot be normalized");
    if (positions.empty())
        throw Error(ErrorCode::NoMaskedPositions, "no positions to evaluate");
    double ss = 0.0;
    for (std::size_t p : positions) {
        if (p >= truth.size())
            throw Error(ErrorCode::OutOfBounds, "position " + std::to_string(p) + " out of range");
        const double zt = (truth[p] - stats.mean) / stats.std;
        const double ze = (estimate[p] - stats.mean) / stats.std;
        ss += (zt - ze) * (zt - ze);
    }
    return std::sqrt(ss / static_cast<double>(positions.size()));
}

} // namespace cifcast::metrics
