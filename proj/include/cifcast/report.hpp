#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace cifcast::metrics {

enum class Protocol { forecast_4d, forecast_extended, uncertainty, imputation };

std::string_view to_string(Protocol protocol) noexcept;
Protocol parse_protocol(std::string_view text);

/// Settings an evaluation run used, copied into every report row.
struct ConfigSnapshot {
    int lookback_days = 0;
    int horizon_hours = 0;
    std::string backend;
    std::string imputer;
    double alpha = 0.0;
    int window_days = 0;
    std::optional<double> mask_fraction;
    std::optional<std::size_t> patch_length;
    std::optional<std::string> method;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::string grid_id;
    Protocol protocol = Protocol::forecast_4d;
    double mean_mape = 0.0;           // percent
    double p90_mape = 0.0;            // percent, over per-issuance MAPEs
    double hourly_p90_mape = 0.0;     // percent, over hourly errors
    std::vector<double> mape_by_day;  // mean MAPE of horizon day k across issuances
    std::optional<double> coverage_overall;       // percent
    std::optional<std::array<double, 4>> coverage_by_day;
    std::optional<double> mean_niw;               // percent
    std::optional<double> nrmse;
    std::size_t n_issuances = 0;
    std::size_t n_interval_issuances = 0;   // issuances scored for coverage (after warm-up)
    std::size_t uncalibrated_blocks = 0;    // fallback blocks among those
    std::size_t excluded_hours = 0;         // hours below epsilon or without truth
    ConfigSnapshot config;
    std::optional<std::string> error;       // e.g. "insufficient_history: ..."
};

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const std::vector<EvalReport>& reports);

/// Aligned text table: grid, mean and 90th MAPE, then whatever the protocol adds.
std::string to_table(const std::vector<EvalReport>& reports);
std::string to_csv(const std::vector<EvalReport>& reports);

} // namespace cifcast::metrics
