#include "cifcast/backends.hpp"

#include "cifcast/error.hpp"
#include "cifcast/imputation.hpp"
#include "cifcast/log.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <mutex>

namespace cifcast {

std::string_view to_string(Mode mode) noexcept { return mode == Mode::zero_shot ? "ZS" : "FT"; }

Mode parse_mode(std::string_view text) {
    if (text == "ZS" || text == "zs" || text == "zero_shot")
        return Mode::zero_shot;
    if (text == "FT" || text == "ft" || text == "fine_tuned")
        return Mode::fine_tuned;
    throw Error(ErrorCode::InvalidMode, "unknown mode '" + std::string(text) + "' (expected ZS or FT)");
}

} // namespace cifcast

namespace cifcast::backends {

namespace {

using json = nlohmann::json;

std::size_t hour_of(Timestamp t) {
    return static_cast<std::size_t>(std::chrono::duration_cast<std::chrono::hours>(time_of_day(t)).count());
}

void require_daily_history(const ForecastRequest& request, const std::string& backend) {
    if (request.lookback.resolution() != Resolution::hourly)
        throw Error(ErrorCode::InvalidArgument, backend + " forecasts hourly series only");
    if (request.lookback.size() < 24)
        throw Error(ErrorCode::LookbackTooShort,
                    backend + " needs at least 24 hours of lookback, got " +
                        std::to_string(request.lookback.size()));
}

} // namespace

std::vector<double> Backend::predict(const ForecastRequest&) const {
    throw Error(ErrorCode::InvalidArgument, "backend '" + descriptor_.name + "' cannot forecast");
}

std::vector<double> Backend::fill(const MaskedSeries&) const {
    throw Error(ErrorCode::InvalidArgument, "backend '" + descriptor_.name + "' cannot impute");
}

// ---------------------------------------------------------------------------

EwmaBackend::EwmaBackend(double alpha, std::string name)
    : Backend(BackendDescriptor{std::move(name), Mode::zero_shot, true, false, std::nullopt}),
      alpha_(alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "EWMA smoothing constant must lie in (0, 1]");
}

std::vector<double> EwmaBackend::predict(const ForecastRequest& request) const {
    require_daily_history(request, descriptor().name);
    const auto& lb = request.lookback;
    std::array<std::optional<double>, 24> state{};
    for (std::size_t i = 0; i < lb.size(); ++i) {
        auto& s = state[hour_of(lb.timestamp(i))];
        const double y = *lb[i];
        s = s ? alpha_ * y + (1.0 - alpha_) * *s : y;
    }
    std::vector<double> out(static_cast<std::size_t>(request.horizon_hours));
    const Timestamp origin = lb.end();
    for (std::size_t h = 0; h < out.size(); ++h)
        out[h] = *state[hour_of(origin + std::chrono::hours{static_cast<long>(h)})];
    return out;
}

SeasonalNaiveBackend::SeasonalNaiveBackend()
    : Backend(BackendDescriptor{"seasonal-naive", Mode::zero_shot, true, false, std::nullopt}) {}

std::vector<double> SeasonalNaiveBackend::predict(const ForecastRequest& request) const {
    require_daily_history(request, descriptor().name);
    const auto& lb = request.lookback;
    const std::size_t n = lb.size();
    std::vector<double> out(static_cast<std::size_t>(request.horizon_hours));
    // Future hour h sits at index n + h; its latest same-hour value is 24 * ceil((h + 1) / 24) earlier.
    for (std::size_t h = 0; h < out.size(); ++h)
        out[h] = *lb[n + (h % 24) - 24];
    return out;
}

InterpolationBackend::InterpolationBackend(std::string method)
    : Backend(BackendDescriptor{method, Mode::zero_shot, false, true, std::nullopt}) {
    if (!imputation::is_native_method(method))
        throw Error(ErrorCode::UnknownModel, "unknown interpolation method '" + method + "'");
}

std::vector<double> InterpolationBackend::fill(const MaskedSeries& masked) const {
    return imputation::impute_native(descriptor().name, masked).to_dense();
}

// ---------------------------------------------------------------------------
// RemoteBackend

RemoteBackend::RemoteBackend(BackendDescriptor descriptor, std::string endpoint,
                             std::chrono::milliseconds timeout)
    : Backend(std::move(descriptor)), endpoint_(std::move(endpoint)), timeout_(timeout) {
    const std::string_view scheme = "http://";
    if (endpoint_.rfind(scheme, 0) != 0)
        throw Error(ErrorCode::InvalidEndpoint, "endpoint must be an http:// URL, got '" + endpoint_ + "'");
    const auto slash = endpoint_.find('/', scheme.size());
    host_ = endpoint_.substr(0, slash);
    if (host_.size() == scheme.size())
        throw Error(ErrorCode::InvalidEndpoint, "endpoint '" + endpoint_ + "' has no host");
    base_path_ = slash == std::string::npos ? "" : endpoint_.substr(slash);
    while (!base_path_.empty() && base_path_.back() == '/')
        base_path_.pop_back();
    if (timeout_.count() <= 0)
        throw Error(ErrorCode::InvalidArgument, "remote timeout must be positive");
}

std::vector<double> RemoteBackend::post(const std::string& path, const std::string& body,
                                        std::size_t expected) const {
    // One client per call: concurrent requests never share a connection.
    httplib::Client client(host_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    const std::string url = base_path_ + path;
    auto res = client.Post(url, body, "application/json");
    if (!res)
        throw Error(ErrorCode::BackendUnavailable, "backend '" + descriptor().name + "' unreachable at " +
                                                       endpoint_ + " (" + httplib::to_string(res.error()) + ")");
    if (res->status != 200)
        throw Error(ErrorCode::BackendUnavailable, "backend '" + descriptor().name + "' answered HTTP " +
                                                       std::to_string(res->status) + ": " + res->body);
    std::vector<double> values;
    try {
        const json doc = json::parse(res->body);
        values = doc.at("values").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BackendUnavailable,
                    "backend '" + descriptor().name + "' sent a malformed response: " + e.what());
    }
    if (values.size() != expected)
        throw Error(ErrorCode::BackendUnavailable, "backend '" + descriptor().name + "' returned " +
                                                       std::to_string(values.size()) + " values, expected " +
                                                       std::to_string(expected));
    for (double v : values)
        if (!std::isfinite(v))
            throw Error(ErrorCode::BackendUnavailable,
                        "backend '" + descriptor().name + "' returned a non-finite value");
    return values;
}

std::vector<double> RemoteBackend::predict(const ForecastRequest& request) const {
    json body{{"grid_id", request.grid_id},
              {"resolution", to_string(request.lookback.resolution())},
              {"lookback", request.lookback.to_dense()},
              {"horizon_hours", request.horizon_hours}};
    return post("/forecast", body.dump(), static_cast<std::size_t>(request.horizon_hours));
}

std::vector<double> RemoteBackend::fill(const MaskedSeries& masked) const {
    json lookback = json::array();
    for (const auto& v : masked.series().values())
        lookback.push_back(v ? json(*v) : json(nullptr));
    json body{{"grid_id", masked.series().grid_id()},
              {"resolution", to_string(masked.series().resolution())},
              {"lookback", std::move(lookback)},
              {"mask", masked.mask()}};
    return post("/impute", body.dump(), masked.size());
}

// ---------------------------------------------------------------------------

ForecastRecord forecast(const Backend& backend, const ForecastRequest& request) {
    const auto& d = backend.descriptor();
    if (!d.can_forecast)
        throw Error(ErrorCode::InvalidArgument, "backend '" + d.name + "' does not forecast");
    if (request.horizon_hours <= 0)
        throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    if (d.max_horizon && request.horizon_hours > *d.max_horizon)
        throw Error(ErrorCode::HorizonTooLong, "horizon " + std::to_string(request.horizon_hours) +
                                                   " h exceeds backend maximum " +
                                                   std::to_string(*d.max_horizon));
    if (request.lookback.empty())
        throw Error(ErrorCode::LookbackTooShort, "empty lookback");
    if (!request.lookback.complete())
        throw Error(ErrorCode::InvalidArgument, "lookback for grid '" + request.grid_id +
                                                    "' has missing values; impute first");
    if (request.lookback.grid_id() != request.grid_id)
        throw Error(ErrorCode::GridMismatch, "lookback belongs to grid '" + request.lookback.grid_id() + "'");

    std::vector<double> values = backend.predict(request);
    if (values.size() != static_cast<std::size_t>(request.horizon_hours))
        throw Error(ErrorCode::BackendUnavailable, "backend '" + d.name + "' returned wrong horizon length");
    std::size_t clamped = 0;
    for (double& v : values) {
        if (!std::isfinite(v))
            throw Error(ErrorCode::BackendUnavailable, "backend '" + d.name + "' returned a non-finite value");
        if (v < 0.0) {
            v = 0.0;
            ++clamped;
        }
    }
    if (clamped > 0)
        log::warning("backend '" + d.name + "': clamped " + std::to_string(clamped) +
                     " negative forecast values to 0 for grid '" + request.grid_id + "'");

    ForecastRecord record;
    record.grid_id = request.grid_id;
    record.issue_day = floor_day(request.lookback.end());
    record.horizon = std::move(values);
    record.backend = d;
    return record;
}

CarbonSeries impute(const Backend& backend, const MaskedSeries& masked) {
    const auto& d = backend.descriptor();
    if (!d.can_impute)
        throw Error(ErrorCode::InvalidArgument, "backend '" + d.name + "' does not impute");
    if (masked.observed_count() == 0)
        throw Error(ErrorCode::AllMissing, "series '" + masked.series().grid_id() + "' has no observed values");
    if (masked.missing_count() == 0)
        return masked.series();

    const std::vector<double> raw = backend.fill(masked);
    if (raw.size() != masked.size())
        throw Error(ErrorCode::BackendUnavailable, "backend '" + d.name + "' returned wrong length");
    const auto& s = masked.series();
    std::vector<CarbonSeries::Value> values(raw.size());
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (masked.mask()[i]) {
            values[i] = s[i];
            continue;
        }
        if (!std::isfinite(raw[i]))
            throw Error(ErrorCode::BackendUnavailable, "backend '" + d.name + "' returned a non-finite value");
        if (raw[i] < 0.0)
            ++clamped;
        values[i] = std::max(0.0, raw[i]);
    }
    if (clamped > 0)
        log::warning("backend '" + d.name + "': clamped " + std::to_string(clamped) + " negative imputed values");
    return CarbonSeries(s.grid_id(), s.start(), s.resolution(), std::move(values));
}

// ---------------------------------------------------------------------------
// BackendRegistry

std::shared_ptr<const Backend> BackendRegistry::register_backend(const BackendDescriptor& descriptor,
                                                                 const std::optional<std::string>& endpoint,
                                                                 std::chrono::milliseconds timeout) {
    if (descriptor.name.empty())
        throw Error(ErrorCode::InvalidArgument, "backend name must not be empty");
    std::shared_ptr<const Backend> backend;
    if (endpoint) {
        if (!descriptor.can_forecast && !descriptor.can_impute)
            throw Error(ErrorCode::InvalidArgument, "backend '" + descriptor.name + "' has no capabilities");
        backend = std::make_shared<RemoteBackend>(descriptor, *endpoint, timeout);
    } else {
        if (descriptor.mode == Mode::fine_tuned)
            throw Error(ErrorCode::InvalidMode, "native backend '" + descriptor.name + "' has no fine-tuned mode");
        const std::string& n = descriptor.name;
        if (n == "ewma") {
            backend = std::make_shared<EwmaBackend>();
        } else if (n.rfind("ewma:", 0) == 0) {
            double alpha = 0.0;
            try {
                alpha = std::stod(n.substr(5));
            } catch (const std::exception&) {
                throw Error(ErrorCode::InvalidArgument, "bad EWMA smoothing constant in '" + n + "'");
            }
            backend = std::make_shared<EwmaBackend>(alpha, n);
        } else if (n == "seasonal-naive") {
            backend = std::make_shared<SeasonalNaiveBackend>();
        } else if (imputation::is_native_method(n)) {
            backend = std::make_shared<InterpolationBackend>(n);
        } else {
            throw Error(ErrorCode::InvalidEndpoint, "backend '" + n + "' is not native and has no endpoint");
        }
    }
    return add(std::move(backend));
}

std::shared_ptr<const Backend> BackendRegistry::add(std::shared_ptr<const Backend> backend) {
    if (!backend)
        throw Error(ErrorCode::InvalidArgument, "null backend");
    std::unique_lock lock(mutex_);
    const auto& name = backend->descriptor().name;
    if (backends_.contains(name))
        throw Error(ErrorCode::DuplicateName, "backend '" + name + "' is already registered");
    backends_.emplace(name, backend);
    return backend;
}

std::shared_ptr<const Backend> BackendRegistry::find(std::string_view name) const {
    std::shared_lock lock(mutex_);
    const auto it = backends_.find(name);
    return it == backends_.end() ? nullptr : it->second;
}

std::shared_ptr<const Backend> BackendRegistry::get(std::string_view name) const {
    auto b = find(name);
    if (!b)
        throw Error(ErrorCode::UnknownModel, "no backend named '" + std::string(name) + "'");
    return b;
}

void BackendRegistry::set_default(std::string_view name, Mode mode) {
    std::unique_lock lock(mutex_);
    const auto it = backends_.find(name);
    if (it == backends_.end())
        throw Error(ErrorCode::UnknownModel, "no backend named '" + std::string(name) + "'");
    const auto& d = it->second->descriptor();
    if (d.mode != mode)
        throw Error(ErrorCode::InvalidMode, "backend '" + d.name + "' is registered in mode " +
                                                std::string(to_string(d.mode)) + ", not " +
                                                std::string(to_string(mode)));
    if (!d.can_forecast)
        throw Error(ErrorCode::InvalidMode, "backend '" + d.name + "' cannot serve forecasts");
    default_ = d.name;
}

void BackendRegistry::set_default(std::string_view name) { set_default(name, get(name)->descriptor().mode); }

std::shared_ptr<const Backend> BackendRegistry::default_backend() const {
    std::shared_lock lock(mutex_);
    if (default_.empty())
        throw Error(ErrorCode::UnknownModel, "no default backend configured");
    return backends_.at(default_);
}

std::string BackendRegistry::default_name() const {
    std::shared_lock lock(mutex_);
    return default_;
}

std::vector<BackendDescriptor> BackendRegistry::list() const {
    std::shared_lock lock(mutex_);
    std::vector<BackendDescriptor> out;
    for (const auto& [_, b] : backends_)
        out.push_back(b->descriptor());
    return out;
}

void register_native_backends(BackendRegistry& registry, double ewma_alpha) {
    registry.add(std::make_shared<EwmaBackend>(ewma_alpha));
    registry.add(std::make_shared<SeasonalNaiveBackend>());
    for (const char* m : {"naive", "linear", "cubic-spline"})
        registry.add(std::make_shared<InterpolationBackend>(m));
    if (registry.default_name().empty())
        registry.set_default("seasonal-naive");
}

} // namespace cifcast::backends
