#include "cifcast/datastore.hpp"

#include "cifcast/error.hpp"
#include "cifcast/log.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace cifcast::datastore {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::string_view kActualsHeader = "timestamp_utc,carbon_intensity_gco2eq_kwh";
constexpr std::string_view kForecastHeader = "target_timestamp_utc,yhat,lower,upper,calibrated";

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    for (auto line : split(text, '\n')) {
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        out.push_back(line);
    }
    while (!out.empty() && out.back().empty())
        out.pop_back();
    return out;
}

double parse_number(std::string_view text, std::string_view context) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw Error(ErrorCode::SchemaViolation, "bad number '" + std::string(text) + "' in " + std::string(context));
    return v;
}

struct Row {
    Timestamp time;
    std::optional<double> value;
};

std::vector<Row> parse_actual_rows(std::string_view text, const std::string& source) {
    const auto lines = lines_of(text);
    if (lines.empty() || lines.front() != kActualsHeader)
        throw Error(ErrorCode::SchemaViolation, source + ": missing or wrong actuals header");
    std::vector<Row> rows;
    rows.reserve(lines.size() - 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split(lines[i], ',');
        if (fields.size() != 2)
            throw Error(ErrorCode::SchemaViolation,
                        source + ": line " + std::to_string(i + 1) + " does not have 2 fields");
        Row r;
        try {
            r.time = parse_timestamp(fields[0]);
        } catch (const Error& e) {
            throw Error(ErrorCode::SchemaViolation, source + ": line " + std::to_string(i + 1) + ": " + e.what());
        }
        if (!fields[1].empty()) {
            const double v = parse_number(fields[1], source);
            if (!std::isfinite(v) || v < 0.0)
                throw Error(ErrorCode::SchemaViolation,
                            source + ": negative or non-finite value on line " + std::to_string(i + 1));
            r.value = v;
        }
        rows.push_back(r);
    }
    return rows;
}

std::map<Timestamp, std::optional<double>> load_rows(const fs::path& path) {
    std::map<Timestamp, std::optional<double>> out;
    if (!fs::exists(path))
        return out;
    for (const auto& r : parse_actual_rows(read_file(path), path.string()))
        out[r.time] = r.value;
    return out;
}

std::string encode_rows(const std::map<Timestamp, std::optional<double>>& rows) {
    std::string out(kActualsHeader);
    out += '\n';
    for (const auto& [t, v] : rows) {
        out += format_timestamp(t);
        out += ',';
        if (v)
            out += format_value(*v);
        out += '\n';
    }
    return out;
}

json descriptor_json(const BackendDescriptor& d) {
    json j{{"name", d.name},
           {"mode", to_string(d.mode)},
           {"forecast", d.can_forecast},
           {"impute", d.can_impute}};
    j["max_horizon"] = d.max_horizon ? json(*d.max_horizon) : json(nullptr);
    return j;
}

BackendDescriptor descriptor_from_json(const json& j) {
    BackendDescriptor d;
    d.name = j.at("name").get<std::string>();
    d.mode = parse_mode(j.at("mode").get<std::string>());
    d.can_forecast = j.value("forecast", true);
    d.can_impute = j.value("impute", false);
    if (j.contains("max_horizon") && !j.at("max_horizon").is_null())
        d.max_horizon = j.at("max_horizon").get<int>();
    return d;
}

void validate_grid_id(std::string_view grid_id) {
    if (grid_id.empty() || grid_id.find_first_of("/\\") != std::string_view::npos || grid_id == "." ||
        grid_id == "..")
        throw Error(ErrorCode::InvalidArgument, "invalid grid id '" + std::string(grid_id) + "'");
}

} // namespace

const GridInfo* GridCatalog::find(std::string_view grid_id) const {
    for (const auto& e : entries)
        if (e.grid_id == grid_id)
            return &e;
    return nullptr;
}

std::string format_value(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    std::string s(buf);
    if (s.find('.') != std::string::npos) {
        while (s.back() == '0')
            s.pop_back();
        if (s.back() == '.')
            s.pop_back();
    }
    if (s == "-0")
        s = "0";
    return s;
}

std::string write_actuals_csv(const CarbonSeries& series) {
    std::string out(kActualsHeader);
    out += '\n';
    for (std::size_t i = 0; i < series.size(); ++i) {
        out += format_timestamp(series.timestamp(i));
        out += ',';
        if (series[i])
            out += format_value(*series[i]);
        out += '\n';
    }
    return out;
}

CarbonSeries parse_actuals_csv(std::string_view text, const std::string& grid_id,
                               std::optional<Resolution> resolution) {
    auto rows = parse_actual_rows(text, "payload for '" + grid_id + "'");
    if (rows.empty())
        return CarbonSeries(grid_id, Timestamp{}, resolution.value_or(Resolution::hourly), {});
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.time < b.time; });
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].time == rows[i - 1].time)
            throw Error(ErrorCode::SchemaViolation,
                        "duplicate timestamp " + format_timestamp(rows[i].time) + " for '" + grid_id + "'");
    Resolution res = resolution.value_or(Resolution::hourly);
    if (!resolution && rows.size() > 1) {
        auto min_gap = rows[1].time - rows[0].time;
        for (std::size_t i = 2; i < rows.size(); ++i)
            min_gap = std::min(min_gap, rows[i].time - rows[i - 1].time);
        res = min_gap < std::chrono::hours{1} ? Resolution::five_minute : Resolution::hourly;
    }
    const auto step = step_of(res);
    const Timestamp start = rows.front().time;
    if (start.time_since_epoch() % step != std::chrono::seconds{0})
        throw Error(ErrorCode::SchemaViolation, "timestamps for '" + grid_id + "' are not aligned to " +
                                                    std::string(to_string(res)));
    const auto n = static_cast<std::size_t>((rows.back().time - start) / step) + 1;
    std::vector<CarbonSeries::Value> values(n);
    for (const auto& r : rows) {
        if ((r.time - start) % step != std::chrono::seconds{0})
            throw Error(ErrorCode::SchemaViolation,
                        "timestamp " + format_timestamp(r.time) + " is off the " + std::string(to_string(res)) + " grid");
        values[static_cast<std::size_t>((r.time - start) / step)] = r.value;
    }
    return CarbonSeries(grid_id, start, res, std::move(values));
}

std::string write_forecast_csv(const ForecastRecord& record) {
    std::string out(kForecastHeader);
    out += '\n';
    for (std::size_t i = 0; i < record.horizon.size(); ++i) {
        out += format_timestamp(record.target_time(i));
        out += ',';
        out += format_value(record.horizon[i]);
        out += ',';
        if (record.interval && i < record.interval->size()) {
            out += format_value(record.interval->hours[i].lower);
            out += ',';
            out += format_value(record.interval->hours[i].upper);
            out += ',';
            out += record.interval->calibrated_at(i) ? "true" : "false";
        } else {
            out += ",,";
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Files

void write_file_atomic(const fs::path& path, std::string_view content) {
    static std::atomic<unsigned long> counter{0};
    fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out)
            throw Error(ErrorCode::IoError, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorCode::IoError, "cannot rename into " + path.string() + ": " + ec.message());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// DataStore

DataStore::DataStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path DataStore::actuals_path(std::string_view grid_id, int year) const {
    return root_ / "data" / std::string(grid_id) / (std::to_string(year) + ".csv");
}

fs::path DataStore::forecast_path(std::string_view grid_id, Day issue_day) const {
    return root_ / "forecasts" / std::string(grid_id) / (format_date(issue_day) + ".csv");
}

std::unique_lock<std::mutex> DataStore::lock_grid(std::string_view grid_id) const {
    std::mutex* m = nullptr;
    {
        std::lock_guard guard(locks_mutex_);
        auto it = grid_locks_.find(grid_id);
        if (it == grid_locks_.end())
            it = grid_locks_.emplace(std::string(grid_id), std::make_unique<std::mutex>()).first;
        m = it->second.get();
    }
    return std::unique_lock(*m);
}

GridCatalog DataStore::catalog() const {
    GridCatalog cat;
    const fs::path path = root_ / "catalog.json";
    if (!fs::exists(path))
        return cat;
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, "catalog.json: " + std::string(e.what()));
    }
    for (const auto& g : doc.at("grids")) {
        GridInfo info;
        info.grid_id = g.at("grid_id").get<std::string>();
        info.display_name = g.value("display_name", info.grid_id);
        info.region = g.value("region", "");
        info.resolution = parse_resolution(g.value("resolution", "hourly"));
        if (auto range = actuals_range(info.grid_id)) {
            info.first_day = range->first;
            info.last_day = range->second;
        }
        cat.entries.push_back(std::move(info));
    }
    return cat;
}

void DataStore::register_grid(const GridInfo& info) {
    validate_grid_id(info.grid_id);
    std::lock_guard guard(catalog_mutex_);
    const fs::path path = root_ / "catalog.json";
    json doc{{"grids", json::array()}};
    if (fs::exists(path))
        doc = json::parse(read_file(path));
    json entry{{"grid_id", info.grid_id},
               {"display_name", info.display_name.empty() ? info.grid_id : info.display_name},
               {"region", info.region},
               {"resolution", to_string(info.resolution)}};
    auto& grids = doc["grids"];
    auto it = std::find_if(grids.begin(), grids.end(),
                           [&](const json& g) { return g.at("grid_id") == info.grid_id; });
    if (it != grids.end())
        *it = entry;
    else
        grids.push_back(entry);
    std::sort(grids.begin(), grids.end(), [](const json& a, const json& b) {
        return a.at("grid_id").get<std::string>() < b.at("grid_id").get<std::string>();
    });
    write_file_atomic(path, doc.dump(2) + "\n");
}

bool DataStore::has_grid(std::string_view grid_id) const {
    const fs::path path = root_ / "catalog.json";
    if (!fs::exists(path))
        return false;
    const json doc = json::parse(read_file(path));
    for (const auto& g : doc.at("grids"))
        if (g.at("grid_id") == grid_id)
            return true;
    return false;
}

void DataStore::check_grid(std::string_view grid_id) const {
    if (!has_grid(grid_id))
        throw Error(ErrorCode::UnknownGrid, "grid '" + std::string(grid_id) + "' is not in the catalog");
}

StoreResult DataStore::store_actuals(const CarbonSeries& series, bool overwrite) {
    check_grid(series.grid_id());
    const GridCatalog cat = catalog();
    const GridInfo* info = cat.find(series.grid_id());
    if (info->resolution != series.resolution())
        throw Error(ErrorCode::SchemaViolation, "grid '" + series.grid_id() + "' stores " +
                                                    std::string(to_string(info->resolution)) + " data");

    StoreResult result;
    std::map<int, std::vector<std::size_t>> by_year;
    for (std::size_t i = 0; i < series.size(); ++i)
        by_year[year_of(floor_day(series.timestamp(i)))].push_back(i);

    for (const auto& [year, indices] : by_year) {
        const fs::path path = actuals_path(series.grid_id(), year);
        auto rows = load_rows(path);
        bool changed = false;
        // Check every conflict before writing anything to this year's file.
        for (std::size_t i : indices) {
            const auto& incoming = series[i];
            if (!incoming)
                continue;
            const auto it = rows.find(series.timestamp(i));
            if (it != rows.end() && it->second && format_value(*it->second) != format_value(*incoming) && !overwrite)
                throw Error(ErrorCode::ConflictingValue,
                            "grid '" + series.grid_id() + "' already holds " + format_value(*it->second) + " at " +
                                format_timestamp(series.timestamp(i)) + " (incoming " + format_value(*incoming) + ")");
        }
        for (std::size_t i : indices) {
            const Timestamp t = series.timestamp(i);
            const auto& incoming = series[i];
            auto it = rows.find(t);
            if (it == rows.end()) {
                rows.emplace(t, incoming);
                changed = true;
                if (incoming)
                    ++result.rows_added;
                continue;
            }
            if (!incoming) {
                ++result.rows_unchanged;
                continue;
            }
            if (!it->second) {
                it->second = incoming;
                changed = true;
                ++result.rows_added;
            } else if (format_value(*it->second) == format_value(*incoming)) {
                ++result.rows_unchanged;
            } else {
                it->second = incoming;
                changed = true;
                ++result.rows_overwritten;
            }
        }
        if (changed)
            write_file_atomic(path, encode_rows(rows));
    }
    return result;
}

CarbonSeries DataStore::load_actuals(std::string_view grid_id, Day from, Day to) const {
    check_grid(grid_id);
    if (to < from)
        throw Error(ErrorCode::InvalidArgument, "empty day range");
    const GridCatalog cat = catalog();
    const Resolution res = cat.find(grid_id)->resolution;
    const auto step = step_of(res);
    const Timestamp start(from);
    const Timestamp stop(to + std::chrono::days{1});
    const auto n = static_cast<std::size_t>((stop - start) / step);
    std::vector<CarbonSeries::Value> values(n);
    for (int year = year_of(from); year <= year_of(to); ++year) {
        for (const auto& [t, v] : load_rows(actuals_path(grid_id, year))) {
            if (t < start || t >= stop || (t - start) % step != std::chrono::seconds{0})
                continue;
            values[static_cast<std::size_t>((t - start) / step)] = v;
        }
    }
    return CarbonSeries(std::string(grid_id), start, res, std::move(values));
}

std::optional<std::pair<Day, Day>> DataStore::actuals_range(std::string_view grid_id) const {
    const fs::path dir = root_ / "data" / std::string(grid_id);
    if (!fs::is_directory(dir))
        return std::nullopt;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::optional<Day> first;
    std::optional<Day> last;
    for (const auto& f : files) {
        for (const auto& [t, v] : load_rows(f)) {
            if (!v)
                continue;
            if (!first)
                first = floor_day(t);
            last = floor_day(t);
        }
        if (first)
            break;
    }
    for (auto it = files.rbegin(); it != files.rend(); ++it) {
        const auto rows = load_rows(*it);
        for (auto r = rows.rbegin(); r != rows.rend(); ++r) {
            if (r->second) {
                last = floor_day(r->first);
                break;
            }
        }
        if (last)
            break;
    }
    if (!first || !last)
        return std::nullopt;
    return std::make_pair(*first, *last);
}

void DataStore::store_forecast(const ForecastRecord& record) {
    validate_grid_id(record.grid_id);
    const fs::path csv = forecast_path(record.grid_id, record.issue_day);
    fs::path meta = csv;
    meta.replace_extension(".meta.json");
    json m{{"grid_id", record.grid_id},
           {"issue_day", format_date(record.issue_day)},
           {"hours", record.horizon.size()},
           {"backend", descriptor_json(record.backend)}};
    // The CSV is the record; the sidecar only names the backend.
    write_file_atomic(meta, m.dump(2) + "\n");
    write_file_atomic(csv, write_forecast_csv(record));
}

std::optional<ForecastRecord> DataStore::load_forecast(std::string_view grid_id, Day issue_day) const {
    const fs::path csv = forecast_path(grid_id, issue_day);
    if (!fs::exists(csv))
        return std::nullopt;
    const std::string text = read_file(csv);
    const auto lines = lines_of(text);
    if (lines.empty() || lines.front() != kForecastHeader)
        throw Error(ErrorCode::SchemaViolation, csv.string() + ": missing or wrong forecast header");

    ForecastRecord rec;
    rec.grid_id = std::string(grid_id);
    rec.issue_day = issue_day;
    IntervalSet iv;
    bool has_interval = true;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = split(lines[i], ',');
        if (f.size() != 5)
            throw Error(ErrorCode::SchemaViolation, csv.string() + ": line " + std::to_string(i + 1) + " malformed");
        if (parse_timestamp(f[0]) != rec.target_time(i - 1))
            throw Error(ErrorCode::SchemaViolation, csv.string() + ": unexpected timestamp on line " + std::to_string(i + 1));
        rec.horizon.push_back(parse_number(f[1], csv.string()));
        if (f[2].empty() || f[3].empty() || f[4].empty()) {
            has_interval = false;
            continue;
        }
        iv.hours.push_back({parse_number(f[2], csv.string()), parse_number(f[3], csv.string())});
        const bool cal = f[4] == "true";
        if ((i - 1) % 24 == 0)
            iv.block_calibrated.push_back(cal);
    }
    if (has_interval && !iv.hours.empty())
        rec.interval = std::move(iv);

    fs::path meta = csv;
    meta.replace_extension(".meta.json");
    if (fs::exists(meta)) {
        const json m = json::parse(read_file(meta));
        rec.backend = descriptor_from_json(m.at("backend"));
    } else {
        rec.backend.name = "unknown";
        rec.backend.can_forecast = true;
    }
    return rec;
}

void DataStore::store_ledger(const conformal::ResidualLedger& ledger) {
    validate_grid_id(ledger.grid_id());
    json hours = json::array();
    for (int h = 1; h <= conformal::kLedgerHours; ++h) {
        json q = json::array();
        for (const auto& e : ledger.queue(h))
            q.push_back(json{{"issue_day", format_date(e.issue_day)}, {"residual", e.residual}});
        hours.push_back(std::move(q));
    }
    json doc{{"grid_id", ledger.grid_id()}, {"window_days", ledger.window_days()}, {"hours", std::move(hours)}};
    write_file_atomic(root_ / "ledgers" / (ledger.grid_id() + ".json"), doc.dump() + "\n");
}

conformal::ResidualLedger DataStore::load_ledger(std::string_view grid_id, int window_days) const {
    const fs::path path = root_ / "ledgers" / (std::string(grid_id) + ".json");
    if (!fs::exists(path))
        return conformal::ResidualLedger(std::string(grid_id), window_days);
    try {
        const json doc = json::parse(read_file(path));
        conformal::ResidualLedger ledger(doc.at("grid_id").get<std::string>(), window_days);
        const auto& hours = doc.at("hours");
        if (!hours.is_array() || hours.size() != static_cast<std::size_t>(conformal::kLedgerHours))
            throw Error(ErrorCode::SchemaViolation, path.string() + ": expected 96 hour queues");
        for (std::size_t h = 0; h < hours.size(); ++h)
            for (const auto& e : hours[h])
                ledger.put(static_cast<int>(h) + 1, parse_date(e.at("issue_day").get<std::string>()),
                           e.at("residual").get<double>());
        return ledger;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
}

void DataStore::store_model_choice(const std::string& name, Mode mode) {
    json doc{{"model", name}, {"mode", to_string(mode)}};
    write_file_atomic(root_ / "state" / "model.json", doc.dump(2) + "\n");
}

std::optional<std::pair<std::string, Mode>> DataStore::load_model_choice() const {
    const fs::path path = root_ / "state" / "model.json";
    if (!fs::exists(path))
        return std::nullopt;
    const json doc = json::parse(read_file(path));
    return std::make_pair(doc.at("model").get<std::string>(), parse_mode(doc.at("mode").get<std::string>()));
}

// ---------------------------------------------------------------------------
// Fetcher

std::size_t FetchSummary::errors() const {
    return static_cast<std::size_t>(
        std::count_if(grids.begin(), grids.end(), [](const FetchOutcome& o) { return o.error_code.has_value(); }));
}

std::string expand_url(std::string_view url_template, std::string_view grid_id, Day date) {
    std::string out(url_template);
    auto replace_all = [&out](std::string_view key, const std::string& value) {
        for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size()))
            out.replace(pos, key.size(), value);
    };
    replace_all("{grid}", std::string(grid_id));
    replace_all("{date}", format_date(date));
    replace_all("{year}", std::to_string(year_of(date)));
    return out;
}

std::string default_transport(const std::string& url, const std::string& token) {
    if (url.rfind("file://", 0) == 0)
        return read_file(url.substr(7));
    if (url.rfind("http://", 0) != 0)
        throw Error(ErrorCode::IoError, "unsupported URL scheme in '" + url + "'");
    const auto slash = url.find('/', 7);
    httplib::Client client(url.substr(0, slash));
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(60, 0);
    httplib::Headers headers;
    if (!token.empty())
        headers.emplace("Authorization", "Bearer " + token);
    auto res = client.Get(slash == std::string::npos ? "/" : url.substr(slash), headers);
    if (!res)
        throw Error(ErrorCode::IoError, "GET " + url + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw Error(ErrorCode::IoError, "GET " + url + " returned HTTP " + std::to_string(res->status));
    return res->body;
}

ParserRegistry::ParserRegistry() {
    parsers_.emplace("actuals-csv", [](std::string_view payload, const GridInfo& grid) {
        return parse_actuals_csv(payload, grid.grid_id, grid.resolution);
    });
}

void ParserRegistry::add(std::string name, PayloadParser parser) { parsers_[std::move(name)] = std::move(parser); }

const PayloadParser& ParserRegistry::get(std::string_view name) const {
    const auto it = parsers_.find(name);
    if (it == parsers_.end())
        throw Error(ErrorCode::InvalidArgument, "no payload parser named '" + std::string(name) + "'");
    return it->second;
}

FetchSummary run_fetch_cycle(const FetchJobConfig& config, const GridCatalog& catalog, DataStore& store, Day date,
                             const Transport& transport, const ParserRegistry& parsers) {
    FetchSummary summary;
    summary.date = date;
    const PayloadParser& parse = parsers.get(config.parser);
    for (const auto& grid : catalog.entries) {
        FetchOutcome outcome;
        outcome.grid_id = grid.grid_id;
        const std::string url = expand_url(config.source_url_template, grid.grid_id, date);
        try {
            std::string payload;
            auto backoff = config.retry.backoff;
            for (int attempt = 1;; ++attempt) {
                try {
                    payload = transport(url, config.token);
                    break;
                } catch (const std::exception& e) {
                    if (attempt >= std::max(1, config.retry.attempts))
                        throw;
                    log::warning("fetch " + url + " attempt " + std::to_string(attempt) + " failed: " + e.what());
                    std::this_thread::sleep_for(backoff);
                    backoff *= 2;
                }
            }
            CarbonSeries series;
            try {
                series = parse(payload, grid);
            } catch (const Error& e) {
                throw Error(ErrorCode::ParseError, e.what());
            }
            if (series.grid_id() != grid.grid_id)
                series = CarbonSeries(grid.grid_id, series.start(), series.resolution(), series.values());
            const auto lock = store.lock_grid(grid.grid_id);
            outcome.rows_added = store.store_actuals(series).rows_added;
        } catch (const Error& e) {
            outcome.error_code = std::string(to_string(e.code()));
            outcome.message = e.what();
        } catch (const std::exception& e) {
            outcome.error_code = std::string(to_string(ErrorCode::IoError));
            outcome.message = e.what();
        }
        summary.grids.push_back(std::move(outcome));
    }
    return summary;
}

std::chrono::hours effective_period(const FetchJobConfig& config) {
    std::chrono::hours period = config.period;
    if (const char* env = std::getenv("CIFCAST_FETCH_PERIOD_HOURS")) {
        try {
            period = std::chrono::hours{std::stol(env)};
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidArgument, "CIFCAST_FETCH_PERIOD_HOURS must be an integer");
        }
    }
    if (period < std::chrono::hours{1})
        throw Error(ErrorCode::InvalidArgument, "fetch period must be at least one hour");
    return period;
}

} // namespace cifcast::datastore
