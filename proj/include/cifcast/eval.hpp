#pragma once

#include "cifcast/backends.hpp"
#include "cifcast/conformal.hpp"
#include "cifcast/report.hpp"
#include "cifcast/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cifcast::eval {

using metrics::EvalReport;
using metrics::Protocol;

/// Where a grid's series comes from when a protocol file is resolved.
struct GridSource {
    std::string id;
    std::variant<std::monostate, synthetic::PeriodicParams, synthetic::VolatileParams> synthetic;
    std::optional<std::string> csv_path; // actuals CSV; otherwise the datastore
    Day synthetic_start{};
    int synthetic_days = 0;
};

struct ProtocolSpec {
    Protocol protocol = Protocol::forecast_4d;
    std::vector<GridSource> grids;
    std::string backend = "seasonal-naive";
    std::string imputer = "linear";        // fills lookback gaps before forecasting
    std::vector<int> lookback_days{30};
    int horizon_days = 4;
    std::optional<Day> test_start;         // inclusive
    std::optional<Day> test_end;           // inclusive
    double train_ratio = 0.7;              // used when no test dates are given
    double alpha = 0.95;
    int window_days = 75;
    int min_days = 10;
    double fallback_width = 0.5;
    std::vector<double> mask_fractions{0.125, 0.25, 0.375, 0.5, 0.625, 0.75};
    std::vector<std::string> methods{"naive", "linear", "cubic-spline"};
    std::optional<std::size_t> patch_length;
    int repeats = 1;                       // mask draws per (grid, fraction)
    std::uint64_t seed = 42;
};

ProtocolSpec parse_protocol_spec(const nlohmann::json& doc);

enum class Execution { serial, parallel };

/// Test days for one grid given its full series (first day, count). The first
/// `warmup_days()` of them only feed the residual ledger.
std::pair<Day, int> test_days(const ProtocolSpec& spec, const CarbonSeries& series);
int warmup_days(const ProtocolSpec& spec) noexcept;
bool uses_intervals(const ProtocolSpec& spec) noexcept;

/// Rolling daily issuance at 00:00 UTC: lookback ends at d-1 23:00, forecast covers
/// [d, d + horizon). One report per grid and lookback length, in input order.
std::vector<EvalReport> run_forecast_protocol(const ProtocolSpec& spec,
                                              const std::map<std::string, CarbonSeries>& series,
                                              const backends::BackendRegistry& registry,
                                              Execution execution = Execution::parallel);

/// One report per grid, mask fraction and method (nRMSE averaged over `repeats` draws).
std::vector<EvalReport> run_imputation_protocol(const ProtocolSpec& spec,
                                                const std::map<std::string, CarbonSeries>& series,
                                                const backends::BackendRegistry& registry,
                                                Execution execution = Execution::parallel);

struct DegradationRow {
    std::string grid_id;
    int lookback_days = 0;
    std::vector<double> mape;  // D1..Dn
    std::vector<double> drop;  // mape[k] - mape[0]
};

struct DegradationTable {
    int horizon_days = 0;
    std::vector<DegradationRow> rows; // grouped by grid, lookback ascending
};

DegradationTable degradation_table(const std::vector<EvalReport>& reports);
/// Rows "1*24", "2*24", ... against columns D1..Dn, one block per grid; MAPE then drop.
std::string format_degradation(const DegradationTable& table);
std::string degradation_csv(const DegradationTable& table);

enum class ReportFormat { json, table, csv };

/// Writes `{dir}/{protocol}.{json,txt,csv}` (plus degradation files for extended runs).
std::vector<std::filesystem::path> emit_report(const std::vector<EvalReport>& reports,
                                               const std::vector<ReportFormat>& formats,
                                               const std::filesystem::path& dir);

} // namespace cifcast::eval
