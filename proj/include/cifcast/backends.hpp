#pragma once

#include "cifcast/forecast.hpp"

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace cifcast::backends {

/**
 * A forecaster and/or imputer. Implementations return raw values; the free
 * functions forecast() and impute() below validate requests and enforce the
 * output contract (length, non-negativity, observed-value pass-through).
 */
class Backend {
public:
    explicit Backend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {}
    virtual ~Backend() = default;

    const BackendDescriptor& descriptor() const noexcept { return descriptor_; }

    virtual std::vector<double> predict(const ForecastRequest& request) const;
    /// Full-length values for the masked series (observed positions may be anything).
    virtual std::vector<double> fill(const MaskedSeries& masked) const;

private:
    BackendDescriptor descriptor_;
};

/// Hour-of-day exponential smoothing: s(d,h) = a*y(d,h) + (1-a)*s(d-1,h),
/// started at the first observed day; every future day repeats the final state.
class EwmaBackend final : public Backend {
public:
    explicit EwmaBackend(double alpha = 0.5, std::string name = "ewma");
    double alpha() const noexcept { return alpha_; }
    std::vector<double> predict(const ForecastRequest& request) const override;

private:
    double alpha_;
};

/// Repeats the most recent value observed at the same hour of day.
class SeasonalNaiveBackend final : public Backend {
public:
    SeasonalNaiveBackend();
    std::vector<double> predict(const ForecastRequest& request) const override;
};

/// Wraps one of the interpolation baselines ("naive", "linear", "cubic-spline").
class InterpolationBackend final : public Backend {
public:
    explicit InterpolationBackend(std::string method);
    std::vector<double> fill(const MaskedSeries& masked) const override;
};

/// Client for an inference sidecar speaking the JSON wire protocol:
///   POST {endpoint}/forecast  {grid_id, resolution, lookback, horizon_hours} -> {values}
///   POST {endpoint}/impute    {grid_id, resolution, lookback, mask}          -> {values}
class RemoteBackend final : public Backend {
public:
    RemoteBackend(BackendDescriptor descriptor, std::string endpoint,
                  std::chrono::milliseconds timeout = std::chrono::seconds{30});

    const std::string& endpoint() const noexcept { return endpoint_; }

    std::vector<double> predict(const ForecastRequest& request) const override;
    std::vector<double> fill(const MaskedSeries& masked) const override;

private:
    std::vector<double> post(const std::string& path, const std::string& body,
                             std::size_t expected) const;

    std::string endpoint_;
    std::string host_;     // scheme://host[:port]
    std::string base_path_; // path prefix without trailing slash
    std::chrono::milliseconds timeout_;
};

/// Checks the request, runs the backend and returns a record without intervals.
/// The issue day is the day following the lookback.
ForecastRecord forecast(const Backend& backend, const ForecastRequest& request);

/// Runs the backend; observed values are passed through unchanged.
CarbonSeries impute(const Backend& backend, const MaskedSeries& masked);

/// Named backends with a switchable default. Lookups are safe under concurrent use.
class BackendRegistry {
public:
    BackendRegistry() = default;
    BackendRegistry(const BackendRegistry&) = delete;
    BackendRegistry& operator=(const BackendRegistry&) = delete;

    /// Native backends are resolved by name ("ewma", "ewma:<alpha>", "seasonal-naive",
    /// "naive", "linear", "cubic-spline"); anything with an endpoint is remote.
    std::shared_ptr<const Backend> register_backend(const BackendDescriptor& descriptor,
                                                    const std::optional<std::string>& endpoint = {},
                                                    std::chrono::milliseconds timeout = std::chrono::seconds{30});
    std::shared_ptr<const Backend> add(std::shared_ptr<const Backend> backend);

    std::shared_ptr<const Backend> find(std::string_view name) const;
    std::shared_ptr<const Backend> get(std::string_view name) const; // UnknownModel

    /// set_model: switch the default; `mode` must match the registered mode.
    void set_default(std::string_view name, Mode mode);
    void set_default(std::string_view name);
    std::shared_ptr<const Backend> default_backend() const;
    std::string default_name() const;

    std::vector<BackendDescriptor> list() const;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const Backend>, std::less<>> backends_;
    std::string default_;
};

/// Registers ewma (given alpha), seasonal-naive and the three interpolation imputers;
/// seasonal-naive becomes the default if none is set.
void register_native_backends(BackendRegistry& registry, double ewma_alpha = 0.5);

} // namespace cifcast::backends
