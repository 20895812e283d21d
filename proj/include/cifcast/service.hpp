#pragma once

#include "cifcast/backends.hpp"
#include "cifcast/conformal.hpp"
#include "cifcast/datastore.hpp"
#include "cifcast/error.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace cifcast::service {

struct RemoteModelConfig {
    BackendDescriptor descriptor;
    std::string endpoint;
    std::chrono::milliseconds timeout{30000};
};

struct ApiConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_root = "cifcast-data";
    std::string default_backend = "seasonal-naive";
    Mode default_mode = Mode::zero_shot;
    std::string imputer = "linear"; // fills lookback gaps and serves /v1/impute by default
    double ewma_alpha = 0.5;
    double alpha = 0.95;
    int window_days = 75;
    int min_days = 10;
    double fallback_width = 0.5;
    int lookback_days = 30;
    int max_horizon = 96;
    std::size_t max_impute_length = 105408; // one year of 5-minute values
    bool on_demand = false;
    std::vector<RemoteModelConfig> remotes;
    datastore::FetchJobConfig fetch;
};

/// Reads a JSON config file. Remote endpoints may be overridden per model with
/// CIFCAST_REMOTE_<NAME>_ENDPOINT / _TIMEOUT_MS (name upper-cased, other chars -> '_'),
/// the fetch token comes from the variable named by fetch.token_env.
ApiConfig config_from_json(const nlohmann::json& doc);
ApiConfig load_config(const std::filesystem::path& path);
/// `flag` if given, else $CIFCAST_CONFIG, else defaults.
ApiConfig resolve_config(const std::optional<std::filesystem::path>& flag);

/// HTTP status for an error code.
int http_status(ErrorCode code) noexcept;

struct GridIssuance {
    std::string grid_id;
    bool issued = false;
    std::size_t residuals_recorded = 0;
    std::size_t calibrated_blocks = 0;
    std::optional<std::string> error_code;
    std::string message;
};

struct IssuanceSummary {
    Day date{};
    std::string backend;
    std::vector<GridIssuance> grids;
    std::size_t errors() const;
};

nlohmann::json to_json(const IssuanceSummary& summary);

/**
 * The function suite behind the HTTP API and the CLI. Every method returns the
 * JSON body it would serve; errors are thrown as cifcast::Error.
 *
 * `date` in forecast and accuracy queries is the issue day, i.e. the first forecast day.
 */
class ForecastService {
public:
    explicit ForecastService(ApiConfig config);

    const ApiConfig& config() const noexcept { return config_; }
    datastore::DataStore& store() noexcept { return store_; }
    const datastore::DataStore& store() const noexcept { return store_; }
    backends::BackendRegistry& registry() noexcept { return registry_; }

    nlohmann::json grids() const;
    nlohmann::json ci_historical(std::string_view grid_id, Day date) const;
    nlohmann::json ci_forecasts(std::string_view grid_id, Day date, int horizon, bool pi,
                                std::optional<bool> on_demand = {}) const;
    nlohmann::json forecast_accuracy(std::string_view grid_id, Day date, int horizon) const;
    /// {values: [number|null], mask?: [0/1], resolution?, start?, method?}
    nlohmann::json impute(const nlohmann::json& payload) const;
    nlohmann::json model() const;
    nlohmann::json set_model(const std::string& name, Mode mode);

    /// Daily issuance for `date` over every catalog grid; failures are per grid.
    IssuanceSummary issue_daily_forecasts(Day date);

private:
    /// Forecast for issue day `date` with intervals from `ledger`; nothing is stored.
    ForecastRecord build_record(std::string_view grid_id, Day date, const conformal::ResidualLedger& ledger,
                                const backends::Backend& backend) const;
    conformal::CalibrationConfig calibration() const;

    ApiConfig config_;
    datastore::DataStore store_;
    backends::BackendRegistry registry_;
    std::mutex model_mutex_;
};

/// Routes under /v1 bound to `service`; the caller owns listening.
std::unique_ptr<httplib::Server> make_server(ForecastService& service);

} // namespace cifcast::service
