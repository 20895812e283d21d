#pragma once

#include "cifcast/conformal.hpp"
#include "cifcast/forecast.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cifcast::datastore {

struct GridInfo {
    std::string grid_id;
    std::string display_name;
    std::string region;
    Resolution resolution = Resolution::hourly;
    std::optional<Day> first_day; // derived from stored actuals
    std::optional<Day> last_day;
};

struct GridCatalog {
    std::vector<GridInfo> entries;

    const GridInfo* find(std::string_view grid_id) const;
};

/// Text form of a stored value: fixed six decimals with trailing zeros removed.
std::string format_value(double value);

/// Actuals CSV (header `timestamp_utc,carbon_intensity_gco2eq_kwh`, empty field = missing).
std::string write_actuals_csv(const CarbonSeries& series);
CarbonSeries parse_actuals_csv(std::string_view text, const std::string& grid_id,
                               std::optional<Resolution> resolution = {});

/// Forecast CSV (header `target_timestamp_utc,yhat,lower,upper,calibrated`).
std::string write_forecast_csv(const ForecastRecord& record);

struct StoreResult {
    std::size_t rows_added = 0;   // timestamps that gained a value
    std::size_t rows_unchanged = 0;
    std::size_t rows_overwritten = 0;
};

/**
 * File-backed store rooted at a directory:
 *
 *   catalog.json
 *   data/{grid}/{year}.csv              actuals
 *   forecasts/{grid}/{YYYY-MM-DD}.csv   one issuance per grid and issue day
 *   forecasts/{grid}/{YYYY-MM-DD}.meta.json
 *   ledgers/{grid}.json                 residual ledger
 *   state/model.json                    selected default backend
 *
 * Every file is written to a temporary sibling and renamed into place. Writes for
 * one grid are serialized; reads need no locking.
 */
class DataStore {
public:
    explicit DataStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }

    GridCatalog catalog() const;
    /// Adds or updates a catalog entry (first/last day fields are ignored).
    void register_grid(const GridInfo& info);
    bool has_grid(std::string_view grid_id) const;

    /// Merge by timestamp. Identical values are no-ops; a different value for a stored
    /// timestamp raises ConflictingValue unless `overwrite`. Absent values never erase.
    StoreResult store_actuals(const CarbonSeries& series, bool overwrite = false);

    /// Hours [from 00:00, to + 1 day) with explicit missingness.
    CarbonSeries load_actuals(std::string_view grid_id, Day from, Day to) const;

    /// Range of days with at least one stored value.
    std::optional<std::pair<Day, Day>> actuals_range(std::string_view grid_id) const;

    void store_forecast(const ForecastRecord& record);
    std::optional<ForecastRecord> load_forecast(std::string_view grid_id, Day issue_day) const;
    std::filesystem::path forecast_path(std::string_view grid_id, Day issue_day) const;

    void store_ledger(const conformal::ResidualLedger& ledger);
    /// Empty ledger with `window_days` if none stored yet.
    conformal::ResidualLedger load_ledger(std::string_view grid_id, int window_days = 75) const;

    void store_model_choice(const std::string& name, Mode mode);
    std::optional<std::pair<std::string, Mode>> load_model_choice() const;

    /// Per-grid writer lock (fetch cycle and issuance take it around multi-file updates).
    std::unique_lock<std::mutex> lock_grid(std::string_view grid_id) const;

private:
    std::filesystem::path actuals_path(std::string_view grid_id, int year) const;
    void check_grid(std::string_view grid_id) const;

    std::filesystem::path root_;
    mutable std::mutex locks_mutex_;
    mutable std::map<std::string, std::unique_ptr<std::mutex>, std::less<>> grid_locks_;
    mutable std::mutex catalog_mutex_;
};

/// Write `content` to `path` atomically (temporary file in the same directory, then rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Fetcher

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds backoff{500}; // doubled after every failed attempt
};

struct FetchJobConfig {
    std::string source_url_template; // {grid} and {date} placeholders
    std::chrono::hours period{24};
    RetryPolicy retry;
    std::string parser = "actuals-csv";
    std::string token; // sent as "Authorization: Bearer <token>" when non-empty
};

/// Fetches a URL body; throws on transport failure.
using Transport = std::function<std::string(const std::string& url, const std::string& token)>;

/// http:// via cpp-httplib and file:// from the local filesystem.
std::string default_transport(const std::string& url, const std::string& token);

using PayloadParser = std::function<CarbonSeries(std::string_view payload, const GridInfo& grid)>;

class ParserRegistry {
public:
    ParserRegistry(); // contains "actuals-csv"
    void add(std::string name, PayloadParser parser);
    const PayloadParser& get(std::string_view name) const;

private:
    std::map<std::string, PayloadParser, std::less<>> parsers_;
};

struct FetchOutcome {
    std::string grid_id;
    std::size_t rows_added = 0;
    std::optional<std::string> error_code; // e.g. "parse_error", "io_error"
    std::string message;
};

struct FetchSummary {
    Day date{};
    std::vector<FetchOutcome> grids;
    std::size_t errors() const;
};

std::string expand_url(std::string_view url_template, std::string_view grid_id, Day date);

/// One download-parse-validate-store pass over every catalog grid. Per-grid failures are
/// recorded in the summary and never stop the cycle.
FetchSummary run_fetch_cycle(const FetchJobConfig& config, const GridCatalog& catalog, DataStore& store,
                             Day date, const Transport& transport = default_transport,
                             const ParserRegistry& parsers = ParserRegistry{});

/// Schedule period, overridable with CIFCAST_FETCH_PERIOD_HOURS.
std::chrono::hours effective_period(const FetchJobConfig& config);

} // namespace cifcast::datastore
