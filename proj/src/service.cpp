#include "cifcast/service.hpp"

#include "cifcast/error.hpp"
#include "cifcast/log.hpp"
#include "cifcast/metrics.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>

namespace cifcast::service {

using json = nlohmann::json;

namespace {

template <class T>
T value_or(const json& doc, const char* key, T fallback) {
    return doc.contains(key) && !doc.at(key).is_null() ? doc.at(key).get<T>() : fallback;
}

std::optional<std::string> env(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    if (!v || !*v)
        return std::nullopt;
    return std::string(v);
}

std::string env_key(std::string_view name) {
    std::string key;
    for (unsigned char c : name)
        key += std::isalnum(c) ? static_cast<char>(std::toupper(c)) : '_';
    return key;
}

json backend_json(const BackendDescriptor& d) {
    json j{{"name", d.name},
           {"mode", to_string(d.mode)},
           {"forecast", d.can_forecast},
           {"impute", d.can_impute}};
    j["max_horizon"] = d.max_horizon ? json(*d.max_horizon) : json(nullptr);
    return j;
}

json value_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void check_horizon(int horizon, int max_horizon) {
    if (horizon < 1)
        throw Error(ErrorCode::InvalidArgument, "horizon must be at least 1 hour");
    if (horizon > max_horizon)
        throw Error(ErrorCode::HorizonTooLong,
                    "horizon " + std::to_string(horizon) + " exceeds the maximum of " + std::to_string(max_horizon));
}

} // namespace

// ---------------------------------------------------------------------------
// Configuration

ApiConfig config_from_json(const json& doc) {
    try {
        ApiConfig c;
        if (doc.contains("listen")) {
            c.host = value_or<std::string>(doc.at("listen"), "host", c.host);
            c.port = value_or<int>(doc.at("listen"), "port", c.port);
        }
        c.data_root = value_or<std::string>(doc, "data_root", c.data_root.string());
        c.default_backend = value_or<std::string>(doc, "default_backend", c.default_backend);
        c.default_mode = parse_mode(value_or<std::string>(doc, "default_mode", "ZS"));
        c.imputer = value_or<std::string>(doc, "imputer", c.imputer);
        c.ewma_alpha = value_or<double>(doc, "ewma_alpha", c.ewma_alpha);
        c.alpha = value_or<double>(doc, "alpha", c.alpha);
        c.window_days = value_or<int>(doc, "window_days", c.window_days);
        c.min_days = value_or<int>(doc, "min_days", c.min_days);
        c.fallback_width = value_or<double>(doc, "fallback_width", c.fallback_width);
        c.lookback_days = value_or<int>(doc, "lookback_days", c.lookback_days);
        c.on_demand = value_or<bool>(doc, "on_demand", c.on_demand);
        if (doc.contains("limits")) {
            const auto& l = doc.at("limits");
            c.max_horizon = value_or<int>(l, "max_horizon", c.max_horizon);
            c.max_impute_length = value_or<std::size_t>(l, "max_impute_length", c.max_impute_length);
        }
        if (c.max_horizon < 1 || c.max_horizon > conformal::kLedgerHours)
            throw Error(ErrorCode::InvalidArgument, "limits.max_horizon must lie in 1..96");
        if (!(c.alpha > 0.0 && c.alpha < 1.0))
            throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
        if (c.lookback_days < 1)
            throw Error(ErrorCode::InvalidArgument, "lookback_days must be positive");

        for (const auto& r : value_or<json>(doc, "remote_backends", json::array())) {
            RemoteModelConfig m;
            m.descriptor.name = r.at("name").get<std::string>();
            m.descriptor.mode = parse_mode(value_or<std::string>(r, "mode", "ZS"));
            m.descriptor.can_forecast = value_or<bool>(r, "forecast", true);
            m.descriptor.can_impute = value_or<bool>(r, "impute", false);
            if (r.contains("max_horizon"))
                m.descriptor.max_horizon = r.at("max_horizon").get<int>();
            m.endpoint = value_or<std::string>(r, "endpoint", "");
            m.timeout = std::chrono::milliseconds{value_or<long>(r, "timeout_ms", 30000)};
            const std::string key = "CIFCAST_REMOTE_" + env_key(m.descriptor.name);
            if (auto e = env(key + "_ENDPOINT"))
                m.endpoint = *e;
            if (auto t = env(key + "_TIMEOUT_MS"))
                m.timeout = std::chrono::milliseconds{std::stol(*t)};
            c.remotes.push_back(std::move(m));
        }

        if (doc.contains("fetch")) {
            const auto& f = doc.at("fetch");
            c.fetch.source_url_template = value_or<std::string>(f, "url", "");
            c.fetch.period = std::chrono::hours{value_or<int>(f, "period_hours", 24)};
            c.fetch.retry.attempts = value_or<int>(f, "attempts", c.fetch.retry.attempts);
            c.fetch.retry.backoff = std::chrono::milliseconds{value_or<long>(f, "backoff_ms", 500)};
            c.fetch.parser = value_or<std::string>(f, "parser", c.fetch.parser);
            c.fetch.token = env(value_or<std::string>(f, "token_env", "CIFCAST_FETCH_TOKEN")).value_or("");
        } else {
            c.fetch.token = env("CIFCAST_FETCH_TOKEN").value_or("");
        }
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("config: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw Error(ErrorCode::InvalidArgument, "config: malformed timeout override");
    }
}

ApiConfig load_config(const std::filesystem::path& path) {
    const std::string text = datastore::read_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    return config_from_json(doc);
}

ApiConfig resolve_config(const std::optional<std::filesystem::path>& flag) {
    if (flag)
        return load_config(*flag);
    if (auto p = env("CIFCAST_CONFIG"))
        return load_config(*p);
    return config_from_json(json::object());
}

int http_status(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::UnknownGrid:
    case ErrorCode::NoData:
    case ErrorCode::NoForecast:
    case ErrorCode::UnknownModel:
        return 404;
    case ErrorCode::TruthUnavailable:
    case ErrorCode::ConflictingValue:
        return 409;
    case ErrorCode::InsufficientHistory:
    case ErrorCode::AllBelowEpsilon:
        return 422;
    case ErrorCode::BackendUnavailable:
        return 503;
    case ErrorCode::IoError:
        return 500;
    default:
        return 400;
    }
}

// ---------------------------------------------------------------------------
// Service

std::size_t IssuanceSummary::errors() const {
    return static_cast<std::size_t>(
        std::count_if(grids.begin(), grids.end(), [](const GridIssuance& g) { return g.error_code.has_value(); }));
}

json to_json(const IssuanceSummary& summary) {
    json grids = json::array();
    for (const auto& g : summary.grids) {
        json j{{"grid_id", g.grid_id},
               {"issued", g.issued},
               {"residuals_recorded", g.residuals_recorded},
               {"calibrated_blocks", g.calibrated_blocks}};
        if (g.error_code) {
            j["error"] = {{"code", *g.error_code}, {"message", g.message}};
        }
        grids.push_back(std::move(j));
    }
    return {{"date", format_date(summary.date)}, {"backend", summary.backend}, {"grids", std::move(grids)}};
}

ForecastService::ForecastService(ApiConfig config) : config_(std::move(config)), store_(config_.data_root) {
    backends::register_native_backends(registry_, config_.ewma_alpha);
    for (const auto& r : config_.remotes)
        registry_.register_backend(r.descriptor, r.endpoint, r.timeout);
    if (!registry_.find(config_.imputer))
        throw Error(ErrorCode::UnknownModel, "configured imputer '" + config_.imputer + "' is not registered");

    registry_.set_default(config_.default_backend, config_.default_mode);
    if (auto stored = store_.load_model_choice()) {
        try {
            registry_.set_default(stored->first, stored->second);
        } catch (const Error& e) {
            log::warning("ignoring stored model choice '" + stored->first + "': " + e.what());
        }
    }
}

conformal::CalibrationConfig ForecastService::calibration() const {
    conformal::CalibrationConfig cal;
    cal.min_days = config_.min_days;
    cal.fallback_width = config_.fallback_width;
    return cal;
}

json ForecastService::grids() const {
    json out = json::array();
    for (const auto& g : store_.catalog().entries) {
        const auto range = store_.actuals_range(g.grid_id);
        json j{{"grid_id", g.grid_id},
               {"name", g.display_name},
               {"region", g.region},
               {"resolution", to_string(g.resolution)}};
        j["first_day"] = range ? json(format_date(range->first)) : json(nullptr);
        j["last_day"] = range ? json(format_date(range->second)) : json(nullptr);
        out.push_back(std::move(j));
    }
    return out;
}

json ForecastService::ci_historical(std::string_view grid_id, Day date) const {
    const CarbonSeries day = store_.load_actuals(grid_id, date, date);
    if (day.present_count() == 0)
        throw Error(ErrorCode::NoData, "no actuals for '" + std::string(grid_id) + "' on " + format_date(date));
    json out = json::array();
    for (std::size_t i = 0; i < day.size(); ++i)
        out.push_back({{"timestamp", format_timestamp(day.timestamp(i))}, {"value", value_json(day[i])}});
    return out;
}

ForecastRecord ForecastService::build_record(std::string_view grid_id, Day date,
                                             const conformal::ResidualLedger& ledger,
                                             const backends::Backend& backend) const {
    const Day first = date - std::chrono::days{config_.lookback_days};
    const Day last = date - std::chrono::days{1};
    const auto range = store_.actuals_range(grid_id);
    if (!range || range->first > first || range->second < last)
        throw Error(ErrorCode::InsufficientHistory,
                    "'" + std::string(grid_id) + "' needs actuals " + format_date(first) + ".." + format_date(last));
    CarbonSeries lookback = store_.load_actuals(grid_id, first, last);
    if (lookback.resolution() != Resolution::hourly)
        throw Error(ErrorCode::ResolutionMismatch, "forecasting needs an hourly grid");
    if (!lookback.complete())
        lookback = backends::impute(*registry_.get(config_.imputer), missing_mask(lookback));

    ForecastRecord record =
        backends::forecast(backend, ForecastRequest{std::string(grid_id), lookback, conformal::kLedgerHours});
    record.interval = conformal::calibrate(ledger, record, conformal::CoverageTarget{config_.alpha}, calibration());
    return record;
}

json ForecastService::ci_forecasts(std::string_view grid_id, Day date, int horizon, bool pi,
                                   std::optional<bool> on_demand) const {
    check_horizon(horizon, config_.max_horizon);
    if (!store_.has_grid(grid_id))
        throw Error(ErrorCode::UnknownGrid, "unknown grid '" + std::string(grid_id) + "'");

    auto record = store_.load_forecast(grid_id, date);
    const bool stored = record.has_value();
    if (!record) {
        if (!on_demand.value_or(config_.on_demand))
            throw Error(ErrorCode::NoForecast,
                        "no forecast issued for '" + std::string(grid_id) + "' on " + format_date(date));
        const auto ledger = store_.load_ledger(grid_id, config_.window_days);
        record = build_record(grid_id, date, ledger, *registry_.default_backend());
    }
    const std::size_t n = std::min(static_cast<std::size_t>(horizon), record->horizon.size());

    json values = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        json v{{"timestamp", format_timestamp(record->target_time(i))}, {"value", record->horizon[i]}};
        if (pi && record->interval) {
            v["lower"] = record->interval->hours[i].lower;
            v["upper"] = record->interval->hours[i].upper;
        }
        values.push_back(std::move(v));
    }
    json out{{"grid_id", record->grid_id},
             {"issue_day", format_date(record->issue_day)},
             {"horizon_hours", n},
             {"backend", {{"name", record->backend.name}, {"mode", to_string(record->backend.mode)}}},
             {"source", stored ? "stored" : "on_demand"},
             {"forecasts", std::move(values)}};
    if (pi) {
        if (!record->interval)
            throw Error(ErrorCode::NoForecast, "stored forecast carries no intervals");
        json blocks = json::array();
        for (std::size_t b = 0; b * 24 < n; ++b)
            blocks.push_back(static_cast<bool>(record->interval->block_calibrated[b]));
        out["calibrated"] = std::move(blocks);
        out["alpha"] = config_.alpha;
    }
    return out;
}

json ForecastService::forecast_accuracy(std::string_view grid_id, Day date, int horizon) const {
    check_horizon(horizon, config_.max_horizon);
    if (!store_.has_grid(grid_id))
        throw Error(ErrorCode::UnknownGrid, "unknown grid '" + std::string(grid_id) + "'");
    const auto record = store_.load_forecast(grid_id, date);
    if (!record)
        throw Error(ErrorCode::NoForecast,
                    "no forecast issued for '" + std::string(grid_id) + "' on " + format_date(date));
    const std::size_t n = std::min(static_cast<std::size_t>(horizon), record->horizon.size());
    const Day last = date + std::chrono::days{static_cast<long>((n - 1) / 24)};
    const CarbonSeries truth = store_.load_actuals(grid_id, date, last);

    std::vector<double> actual, forecast;
    for (std::size_t i = 0; i < n; ++i) {
        if (!truth[i])
            continue;
        actual.push_back(*truth[i]);
        forecast.push_back(record->horizon[i]);
    }
    if (actual.empty())
        throw Error(ErrorCode::TruthUnavailable, "no ground truth yet for the requested window");
    const auto m = metrics::mape(actual, forecast);
    return {{"grid_id", record->grid_id},
            {"issue_day", format_date(date)},
            {"horizon_hours", n},
            {"mape", m.percent},
            {"evaluated_hours", m.evaluated},
            {"excluded_hours", m.excluded},
            {"missing_hours", n - actual.size()}};
}

json ForecastService::impute(const json& payload) const {
    try {
        const auto& raw = payload.at("values");
        if (!raw.is_array())
            throw Error(ErrorCode::InvalidArgument, "'values' must be an array");
        if (raw.size() > config_.max_impute_length)
            throw Error(ErrorCode::InvalidArgument,
                        "series longer than " + std::to_string(config_.max_impute_length) + " values");
        if (raw.empty())
            throw Error(ErrorCode::AllMissing, "empty series");

        // Without a mask, null marks a missing value.
        std::vector<std::uint8_t> mask(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i)
            mask[i] = raw[i].is_null() ? 0 : 1;
        if (payload.contains("mask") && !payload.at("mask").is_null()) {
            const auto& m = payload.at("mask");
            if (!m.is_array() || m.size() != raw.size())
                throw Error(ErrorCode::LengthMismatch, "'mask' and 'values' differ in length");
            for (std::size_t i = 0; i < m.size(); ++i) {
                const int bit = m[i].get<int>();
                if (bit != 0 && bit != 1)
                    throw Error(ErrorCode::InvalidArgument, "mask entries must be 0 or 1");
                mask[i] = static_cast<std::uint8_t>(bit);
            }
        }
        std::vector<CarbonSeries::Value> values(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i].is_null()) {
                if (mask[i])
                    throw Error(ErrorCode::InvalidArgument, "value " + std::to_string(i) + " is null but marked observed");
                continue;
            }
            if (mask[i])
                values[i] = raw[i].get<double>();
        }

        const Resolution res = parse_resolution(value_or<std::string>(payload, "resolution", "hourly"));
        const Timestamp start =
            payload.contains("start") ? parse_timestamp(payload.at("start").get<std::string>()) : Timestamp{};
        const std::string grid = value_or<std::string>(payload, "grid_id", "request");
        const std::string method = value_or<std::string>(payload, "method", config_.imputer);
        const auto backend = registry_.get(method);

        CarbonSeries series(grid, start, res, std::move(values));
        if (series.present_count() == 0)
            throw Error(ErrorCode::AllMissing, "no observed values");
        const CarbonSeries filled = backends::impute(*backend, missing_mask(series));

        json out_values = json::array();
        for (const auto& v : filled.values())
            out_values.push_back(*v);
        return {{"method", method},
                {"resolution", to_string(res)},
                {"imputed", series.size() - series.present_count()},
                {"values", std::move(out_values)}};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("impute payload: ") + e.what());
    }
}

json ForecastService::model() const {
    json available = json::array();
    for (const auto& d : registry_.list())
        available.push_back(backend_json(d));
    const auto current = registry_.default_backend();
    return {{"model", current->descriptor().name},
            {"mode", to_string(current->descriptor().mode)},
            {"available", std::move(available)}};
}

json ForecastService::set_model(const std::string& name, Mode mode) {
    std::lock_guard lock(model_mutex_);
    registry_.set_default(name, mode);
    store_.store_model_choice(name, mode);
    return {{"model", name}, {"mode", to_string(mode)}, {"status", "ok"}};
}

IssuanceSummary ForecastService::issue_daily_forecasts(Day date) {
    const auto backend = registry_.default_backend();
    IssuanceSummary summary;
    summary.date = date;
    summary.backend = backend->descriptor().name;
    const int horizon_days = conformal::kLedgerHours / 24;

    for (const auto& grid : store_.catalog().entries) {
        GridIssuance out;
        out.grid_id = grid.grid_id;
        try {
            auto lock = store_.lock_grid(grid.grid_id);
            conformal::ResidualLedger ledger = store_.load_ledger(grid.grid_id, config_.window_days);

            // Ground truth through date - 1 for issuances still inside their horizon.
            for (int back = horizon_days; back >= 1; --back) {
                const Day issued = date - std::chrono::days{back};
                const auto rec = store_.load_forecast(grid.grid_id, issued);
                if (!rec)
                    continue;
                const CarbonSeries truth = store_.load_actuals(grid.grid_id, issued, date - std::chrono::days{1});
                const std::size_t n = std::min(truth.size(), rec->horizon.size());
                out.residuals_recorded += conformal::record_outcome(ledger, *rec, slice(truth, Window{0, n}));
            }

            const ForecastRecord record = build_record(grid.grid_id, date, ledger, *backend);
            for (bool c : record.interval->block_calibrated)
                out.calibrated_blocks += c ? 1 : 0;
            store_.store_forecast(record);
            store_.store_ledger(ledger);
            out.issued = true;
        } catch (const Error& e) {
            out.error_code = std::string(to_string(e.code()));
            out.message = e.what();
            log::warning("issuance for '" + grid.grid_id + "' failed: " + e.what());
        } catch (const std::exception& e) {
            out.error_code = "io_error";
            out.message = e.what();
            log::warning("issuance for '" + grid.grid_id + "' failed: " + e.what());
        }
        summary.grids.push_back(std::move(out));
    }
    return summary;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
    send_json(res, http_status(code), {{"code", to_string(code)}, {"message", message}});
}

int int_param(const httplib::Request& req, const char* name, int fallback) {
    if (!req.has_param(name))
        return fallback;
    const std::string text = req.get_param_value(name);
    try {
        std::size_t used = 0;
        const int v = std::stoi(text, &used);
        if (used != text.size())
            throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, std::string("parameter '") + name + "' must be an integer");
    }
}

bool bool_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name))
        return false;
    const std::string v = req.get_param_value(name);
    if (v == "true" || v == "True" || v == "1")
        return true;
    if (v == "false" || v == "False" || v == "0" || v.empty())
        return false;
    throw Error(ErrorCode::InvalidArgument, std::string("parameter '") + name + "' must be true or false");
}

template <class Handler>
httplib::Server::Handler guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
        try {
            handler(req, res);
        } catch (const Error& e) {
            send_error(res, e.code(), e.what());
        } catch (const json::exception& e) {
            send_error(res, ErrorCode::SchemaViolation, e.what());
        } catch (const std::exception& e) {
            log::error(std::string("request failed: ") + e.what());
            send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
        }
    };
}

json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("request body: ") + e.what());
    }
}

constexpr const char* kDate = R"((\d{4}-\d{2}-\d{2}))";

} // namespace

std::unique_ptr<httplib::Server> make_server(ForecastService& service) {
    auto server = std::make_unique<httplib::Server>();
    auto& s = *server;
    const int max_h = service.config().max_horizon;

    s.Get("/v1/grids", guarded([&service](const httplib::Request&, httplib::Response& res) {
              send_json(res, 200, service.grids());
          }));
    s.Get(std::string("/v1/ci/([^/]+)/") + kDate,
          guarded([&service](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, service.ci_historical(req.matches[1].str(), parse_date(req.matches[2].str())));
          }));
    s.Get(std::string("/v1/forecasts/([^/]+)/") + kDate,
          guarded([&service, max_h](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200,
                        service.ci_forecasts(req.matches[1].str(), parse_date(req.matches[2].str()),
                                             int_param(req, "horizon", max_h), bool_param(req, "pi")));
          }));
    s.Get(std::string("/v1/accuracy/([^/]+)/") + kDate,
          guarded([&service, max_h](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200,
                        service.forecast_accuracy(req.matches[1].str(), parse_date(req.matches[2].str()),
                                                  int_param(req, "horizon", max_h)));
          }));
    s.Post("/v1/impute", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.impute(parse_body(req)));
           }));
    s.Get("/v1/model", guarded([&service](const httplib::Request&, httplib::Response& res) {
              send_json(res, 200, service.model());
          }));
    auto set_model = guarded([&service](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        if (!body.contains("model") || !body.at("model").is_string())
            throw Error(ErrorCode::SchemaViolation, "body needs a string 'model'");
        const Mode mode = parse_mode(value_or<std::string>(body, "mode", "ZS"));
        send_json(res, 200, service.set_model(body.at("model").get<std::string>(), mode));
    });
    s.Put("/v1/model", set_model);
    s.Post("/v1/model", set_model);

    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty())
            res.set_content(json{{"code", res.status == 404 ? "not_found" : "http_error"},
                                 {"message", httplib::status_message(res.status)}}
                                .dump(),
                            "application/json");
    });
    return server;
}

} // namespace cifcast::service
