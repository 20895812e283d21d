#include "cifcast/eval.hpp"

#include "cifcast/datastore.hpp"
#include "cifcast/error.hpp"
#include "cifcast/imputation.hpp"
#include "cifcast/metrics.hpp"
#include "cifcast/random.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <exception>
#include <sstream>

namespace cifcast::eval {

using json = nlohmann::json;

namespace {

constexpr int kIntervalHours = conformal::kLedgerHours;

template <class T>
T value_or(const json& doc, const char* key, T fallback) {
    return doc.contains(key) && !doc.at(key).is_null() ? doc.at(key).get<T>() : fallback;
}

Day series_first_day(const CarbonSeries& s) { return floor_day(s.start()); }

/// Runs `body(i)` for i in [0, n), either in order or as an OpenMP loop.
/// The first exception thrown by any iteration is rethrown afterwards.
template <class Body>
void for_each_task(std::size_t n, Execution execution, Body&& body) {
    if (execution == Execution::serial) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::exception_ptr failure;
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(cifcast_eval_failure)
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
}

metrics::ConfigSnapshot snapshot(const ProtocolSpec& spec, int lookback_days) {
    metrics::ConfigSnapshot c;
    c.lookback_days = lookback_days;
    c.horizon_hours = spec.horizon_days * 24;
    c.backend = spec.backend;
    c.imputer = spec.imputer;
    c.alpha = spec.alpha;
    c.window_days = spec.window_days;
    c.seed = spec.seed;
    return c;
}

CarbonSeries prepared(const CarbonSeries& raw) {
    if (raw.resolution() != Resolution::hourly)
        throw Error(ErrorCode::ResolutionMismatch, "forecast protocols need hourly series");
    return align_to_day_boundary(raw);
}

EvalReport forecast_one(const ProtocolSpec& spec, const CarbonSeries& raw, int lookback_days,
                        const backends::Backend& backend, const backends::Backend& imputer) {
    EvalReport report;
    report.grid_id = raw.grid_id();
    report.protocol = spec.protocol;
    report.config = snapshot(spec, lookback_days);

    const CarbonSeries series = prepared(raw);
    const auto [first_test, n_test] = test_days(spec, series);
    const Day series_first = series_first_day(series);
    const Day series_end = floor_day(series.end()); // exclusive
    const int horizon = spec.horizon_days * 24;
    const bool intervals = uses_intervals(spec) && horizon <= kIntervalHours;
    const int warmup = intervals ? warmup_days(spec) : 0;

    if (first_test - std::chrono::days{lookback_days} < series_first)
        throw Error(ErrorCode::InsufficientHistory,
                    "grid '" + series.grid_id() + "' needs " + std::to_string(lookback_days) +
                        " lookback days before " + format_date(first_test));
    if (n_test <= warmup)
        throw Error(ErrorCode::InsufficientHistory,
                    "grid '" + series.grid_id() + "' has " + std::to_string(n_test) +
                        " test days, warm-up alone needs " + std::to_string(warmup + 1));

    conformal::ResidualLedger ledger(series.grid_id(), spec.window_days);
    const conformal::CoverageTarget target{spec.alpha};
    conformal::CalibrationConfig cal;
    cal.min_days = spec.min_days;
    cal.fallback_width = spec.fallback_width;

    std::deque<ForecastRecord> recent;
    std::vector<metrics::Issuance> issuances;
    std::vector<std::vector<double>> day_mapes(static_cast<std::size_t>(spec.horizon_days));
    std::vector<double> cov_actual, cov_lower, cov_upper;
    std::array<std::vector<double>, 4> day_actual, day_lower, day_upper;

    for (int t = 0; t < n_test; ++t) {
        const Day day = first_test + std::chrono::days{t};
        const Timestamp origin(day);

        // Residuals whose ground truth is complete by the end of day - 1.
        if (intervals) {
            for (const auto& rec : recent) {
                const Timestamp truth_end = std::min(origin, rec.target_time(rec.horizon.size()));
                if (truth_end <= rec.target_time(0))
                    continue;
                conformal::record_outcome(ledger, rec, slice_time(series, rec.target_time(0), truth_end));
            }
        }

        CarbonSeries lookback = slice_time(series, origin - std::chrono::hours{24 * lookback_days}, origin);
        assert(lookback.end() == origin);
        if (!lookback.complete()) {
            if (lookback.present_count() == 0) {
                report.excluded_hours += static_cast<std::size_t>(horizon);
                continue;
            }
            lookback = backends::impute(imputer, missing_mask(lookback));
        }
        ForecastRecord record = backends::forecast(backend, ForecastRequest{series.grid_id(), lookback, horizon});
        if (intervals)
            record.interval = conformal::calibrate(ledger, record, target, cal);

        // Score against whatever truth exists in [day, day + horizon).
        const Day window_end = std::min(series_end, day + std::chrono::days{spec.horizon_days});
        if (window_end > day) {
            const CarbonSeries truth = slice_time(series, origin, Timestamp(window_end));
            metrics::Issuance is;
            std::vector<std::vector<double>> per_day_a(day_mapes.size()), per_day_f(day_mapes.size());
            for (std::size_t i = 0; i < truth.size(); ++i) {
                if (!truth[i] || *truth[i] < metrics::kEpsilon) {
                    ++report.excluded_hours;
                    continue;
                }
                is.actual.push_back(*truth[i]);
                is.forecast.push_back(record.horizon[i]);
                per_day_a[i / 24].push_back(*truth[i]);
                per_day_f[i / 24].push_back(record.horizon[i]);
            }
            if (!is.actual.empty())
                issuances.push_back(std::move(is));
            for (std::size_t k = 0; k < day_mapes.size(); ++k)
                if (!per_day_a[k].empty())
                    day_mapes[k].push_back(metrics::mape(per_day_a[k], per_day_f[k]).percent);

            if (intervals && t >= warmup) {
                ++report.n_interval_issuances;
                const auto& iv = *record.interval;
                for (bool c : iv.block_calibrated)
                    if (!c)
                        ++report.uncalibrated_blocks;
                for (std::size_t i = 0; i < truth.size(); ++i) {
                    if (!truth[i])
                        continue;
                    const std::size_t block = i / 24;
                    day_actual[block].push_back(*truth[i]);
                    day_lower[block].push_back(iv.hours[i].lower);
                    day_upper[block].push_back(iv.hours[i].upper);
                    cov_actual.push_back(*truth[i]);
                    cov_lower.push_back(iv.hours[i].lower);
                    cov_upper.push_back(iv.hours[i].upper);
                }
            }
        }

        recent.push_back(std::move(record));
        while (!recent.empty() && recent.front().issue_day + std::chrono::days{spec.horizon_days} < day)
            recent.pop_front();
    }

    if (issuances.empty())
        throw Error(ErrorCode::TruthUnavailable, "no scorable issuance for grid '" + series.grid_id() + "'");
    const auto w = metrics::window_mapes(issuances);
    report.n_issuances = w.issuances;
    report.mean_mape = w.mean;
    report.p90_mape = w.p90;
    report.hourly_p90_mape = w.hourly_p90;
    for (const auto& m : day_mapes) {
        double sum = 0.0;
        for (double v : m)
            sum += v;
        report.mape_by_day.push_back(m.empty() ? 0.0 : sum / static_cast<double>(m.size()));
    }
    if (intervals && !cov_actual.empty()) {
        report.coverage_overall = metrics::coverage(cov_actual, cov_lower, cov_upper);
        std::array<double, 4> by_day{};
        for (std::size_t d = 0; d < 4; ++d)
            by_day[d] = day_actual[d].empty() ? 0.0 : metrics::coverage(day_actual[d], day_lower[d], day_upper[d]);
        report.coverage_by_day = by_day;
        try {
            report.mean_niw = metrics::niw(cov_actual, cov_lower, cov_upper);
        } catch (const Error&) {
            // every scored hour below epsilon: leave NIW unset
        }
    }
    return report;
}

} // namespace

// ---------------------------------------------------------------------------

int warmup_days(const ProtocolSpec& spec) noexcept { return std::max(spec.window_days, spec.min_days) + 3; }

bool uses_intervals(const ProtocolSpec& spec) noexcept {
    return spec.protocol == Protocol::forecast_4d || spec.protocol == Protocol::uncertainty;
}

std::pair<Day, int> test_days(const ProtocolSpec& spec, const CarbonSeries& series) {
    const Day first = floor_day(series.start());
    const Day end = floor_day(series.end()); // exclusive
    const int total = static_cast<int>((end - first).count());
    if (total <= 0)
        throw Error(ErrorCode::InsufficientHistory, "series '" + series.grid_id() + "' spans no full day");
    Day start = spec.test_start.value_or(first + std::chrono::days{static_cast<int>(std::ceil(spec.train_ratio * total))});
    Day last = spec.test_end.value_or(end - std::chrono::days{1});
    if (last >= end)
        last = end - std::chrono::days{1};
    if (start < first || start > last)
        throw Error(ErrorCode::InsufficientHistory,
                    "test range for '" + series.grid_id() + "' is outside the available data");
    return {start, static_cast<int>((last - start).count()) + 1};
}

std::vector<EvalReport> run_forecast_protocol(const ProtocolSpec& spec,
                                              const std::map<std::string, CarbonSeries>& series,
                                              const backends::BackendRegistry& registry, Execution execution) {
    if (spec.protocol == Protocol::imputation)
        throw Error(ErrorCode::InvalidArgument, "imputation specs go through run_imputation_protocol");
    if (spec.horizon_days < 1 || spec.horizon_days > 21)
        throw Error(ErrorCode::InvalidArgument, "horizon must be 1..21 days");
    const auto backend = registry.get(spec.backend);
    const auto imputer = registry.get(spec.imputer);

    struct Task {
        const GridSource* grid;
        int lookback;
    };
    std::vector<Task> tasks;
    for (const auto& g : spec.grids)
        for (int lb : spec.lookback_days)
            tasks.push_back({&g, lb});

    std::vector<EvalReport> reports(tasks.size());
    for_each_task(tasks.size(), execution, [&](std::size_t i) {
        const auto& task = tasks[i];
        const auto it = series.find(task.grid->id);
        try {
            if (it == series.end())
                throw Error(ErrorCode::UnknownGrid, "no series for grid '" + task.grid->id + "'");
            reports[i] = forecast_one(spec, it->second, task.lookback, *backend, *imputer);
        } catch (const Error& e) {
            EvalReport r;
            r.grid_id = task.grid->id;
            r.protocol = spec.protocol;
            r.config = snapshot(spec, task.lookback);
            r.error = std::string(to_string(e.code())) + ": " + e.what();
            reports[i] = std::move(r);
        }
    });
    return reports;
}

std::vector<EvalReport> run_imputation_protocol(const ProtocolSpec& spec,
                                                const std::map<std::string, CarbonSeries>& series,
                                                const backends::BackendRegistry& registry, Execution execution) {
    if (spec.repeats < 1)
        throw Error(ErrorCode::InvalidArgument, "repeats must be at least 1");
    std::vector<std::shared_ptr<const backends::Backend>> methods;
    for (const auto& m : spec.methods)
        methods.push_back(registry.get(m));

    struct Task {
        const GridSource* grid;
        std::size_t fraction_index;
    };
    std::vector<Task> tasks;
    for (const auto& g : spec.grids)
        for (std::size_t f = 0; f < spec.mask_fractions.size(); ++f)
            tasks.push_back({&g, f});

    const std::size_t per_task = methods.size();
    std::vector<EvalReport> reports(tasks.size() * per_task);
    for_each_task(tasks.size(), execution, [&](std::size_t i) {
        const auto& task = tasks[i];
        const double fraction = spec.mask_fractions[task.fraction_index];
        auto fill_error = [&](const std::string& message) {
            for (std::size_t m = 0; m < per_task; ++m) {
                EvalReport r;
                r.grid_id = task.grid->id;
                r.protocol = Protocol::imputation;
                r.config = snapshot(spec, 0);
                r.config.mask_fraction = fraction;
                r.config.method = spec.methods[m];
                r.error = message;
                reports[i * per_task + m] = std::move(r);
            }
        };
        try {
            const auto it = series.find(task.grid->id);
            if (it == series.end())
                throw Error(ErrorCode::UnknownGrid, "no series for grid '" + task.grid->id + "'");
            const auto [first_test, n_test] = test_days(spec, it->second);
            const Timestamp from = std::max(it->second.start(), Timestamp(first_test));
            const Timestamp to = std::min(it->second.end(), Timestamp(first_test + std::chrono::days{n_test}));
            const CarbonSeries truth = slice_time(it->second, from, to);
            if (!truth.complete())
                throw Error(ErrorCode::InvalidArgument,
                            "imputation truth for '" + truth.grid_id() + "' must be fully observed");
            const std::size_t patch = spec.patch_length.value_or(imputation::default_patch_length(truth.resolution()));

            std::vector<double> sums(per_task, 0.0);
            for (int rep = 0; rep < spec.repeats; ++rep) {
                imputation::MaskPlan plan{fraction, patch,
                                          derive_seed(spec.seed, truth.grid_id(),
                                                      task.fraction_index * 1000003ULL + static_cast<std::uint64_t>(rep))};
                const auto mask = imputation::generate_mask(truth.size(), plan);
                const MaskedSeries masked = apply_mask(truth, mask.mask);
                for (std::size_t m = 0; m < per_task; ++m) {
                    const CarbonSeries estimate = backends::impute(*methods[m], masked);
                    sums[m] += imputation::evaluate_estimate(truth, masked, estimate);
                }
            }
            for (std::size_t m = 0; m < per_task; ++m) {
                EvalReport r;
                r.grid_id = task.grid->id;
                r.protocol = Protocol::imputation;
                r.config = snapshot(spec, 0);
                r.config.horizon_hours = 0;
                r.config.mask_fraction = fraction;
                r.config.patch_length = patch;
                r.config.method = spec.methods[m];
                r.nrmse = sums[m] / static_cast<double>(spec.repeats);
                reports[i * per_task + m] = std::move(r);
            }
        } catch (const Error& e) {
            fill_error(std::string(to_string(e.code())) + ": " + e.what());
        }
    });
    return reports;
}

// ---------------------------------------------------------------------------

DegradationTable degradation_table(const std::vector<EvalReport>& reports) {
    DegradationTable table;
    std::vector<std::string> order;
    std::map<std::string, std::vector<DegradationRow>> by_grid;
    for (const auto& r : reports) {
        if (r.error)
            continue;
        DegradationRow row{r.grid_id, r.config.lookback_days, r.mape_by_day, {}};
        for (double m : row.mape)
            row.drop.push_back(m - row.mape.front());
        table.horizon_days = std::max(table.horizon_days, static_cast<int>(row.mape.size()));
        if (!by_grid.contains(r.grid_id))
            order.push_back(r.grid_id);
        by_grid[r.grid_id].push_back(std::move(row));
    }
    for (const auto& g : order) {
        auto rows = by_grid[g];
        std::stable_sort(rows.begin(), rows.end(),
                         [](const DegradationRow& a, const DegradationRow& b) { return a.lookback_days < b.lookback_days; });
        for (auto& row : rows)
            table.rows.push_back(std::move(row));
    }
    return table;
}

std::string format_degradation(const DegradationTable& table) {
    std::ostringstream out;
    auto header = [&] {
        out << std::string(7, ' ');
        for (int d = 1; d <= table.horizon_days; ++d) {
            const std::string label = "D" + std::to_string(d);
            out << std::string(label.size() < 7 ? 7 - label.size() : 0, ' ') << label;
        }
        out << '\n';
    };
    auto cells = [&](const std::vector<double>& v) {
        for (double x : v) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%7.2f", x);
            out << buf;
        }
        out << '\n';
    };
    std::string current;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        if (row.grid_id != current) {
            current = row.grid_id;
            out << (i ? "\n" : "") << "[" << current << "] MAPE (%)\n";
            header();
            for (std::size_t j = i; j < table.rows.size() && table.rows[j].grid_id == current; ++j) {
                char label[16];
                std::snprintf(label, sizeof label, "%-7s", (std::to_string(table.rows[j].lookback_days) + "*24").c_str());
                out << label;
                cells(table.rows[j].mape);
            }
            out << "[" << current << "] Drop vs D1 (points)\n";
            header();
            for (std::size_t j = i; j < table.rows.size() && table.rows[j].grid_id == current; ++j) {
                char label[16];
                std::snprintf(label, sizeof label, "%-7s", (std::to_string(table.rows[j].lookback_days) + "*24").c_str());
                out << label;
                cells(table.rows[j].drop);
            }
        }
    }
    return out.str();
}

std::string degradation_csv(const DegradationTable& table) {
    std::ostringstream out;
    out << "grid_id,lookback_hours";
    for (int d = 1; d <= table.horizon_days; ++d)
        out << ",D" << d;
    for (int d = 1; d <= table.horizon_days; ++d)
        out << ",Drop" << d;
    out << '\n';
    for (const auto& row : table.rows) {
        out << row.grid_id << ',' << row.lookback_days * 24;
        for (double v : row.mape)
            out << ',' << datastore::format_value(v);
        for (double v : row.drop)
            out << ',' << datastore::format_value(v);
        out << '\n';
    }
    return out.str();
}

std::vector<std::filesystem::path> emit_report(const std::vector<EvalReport>& reports,
                                               const std::vector<ReportFormat>& formats,
                                               const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> written;
    if (reports.empty())
        return written;
    const std::string stem(metrics::to_string(reports.front().protocol));
    const bool extended = reports.front().protocol == Protocol::forecast_extended;
    for (auto f : formats) {
        switch (f) {
        case ReportFormat::json:
            written.push_back(dir / (stem + ".json"));
            datastore::write_file_atomic(written.back(), metrics::to_json(reports).dump(2) + "\n");
            break;
        case ReportFormat::table:
            written.push_back(dir / (stem + ".txt"));
            datastore::write_file_atomic(written.back(), metrics::to_table(reports));
            if (extended) {
                written.push_back(dir / "degradation.txt");
                datastore::write_file_atomic(written.back(), format_degradation(degradation_table(reports)));
            }
            break;
        case ReportFormat::csv:
            written.push_back(dir / (stem + ".csv"));
            datastore::write_file_atomic(written.back(), metrics::to_csv(reports));
            if (extended) {
                written.push_back(dir / "degradation.csv");
                datastore::write_file_atomic(written.back(), degradation_csv(degradation_table(reports)));
            }
            break;
        }
    }
    return written;
}

// ---------------------------------------------------------------------------

ProtocolSpec parse_protocol_spec(const json& doc) {
    try {
        ProtocolSpec spec;
        spec.protocol = metrics::parse_protocol(doc.at("protocol").get<std::string>());
        spec.backend = value_or<std::string>(doc, "backend", spec.backend);
        spec.imputer = value_or<std::string>(doc, "imputer", spec.imputer);
        spec.lookback_days = value_or<std::vector<int>>(doc, "lookback_days", spec.lookback_days);
        spec.horizon_days = value_or<int>(doc, "horizon_days", spec.horizon_days);
        if (doc.contains("test_start"))
            spec.test_start = parse_date(doc.at("test_start").get<std::string>());
        if (doc.contains("test_end"))
            spec.test_end = parse_date(doc.at("test_end").get<std::string>());
        spec.train_ratio = value_or<double>(doc, "train_ratio", spec.train_ratio);
        spec.alpha = value_or<double>(doc, "alpha", spec.alpha);
        spec.window_days = value_or<int>(doc, "window_days", spec.window_days);
        spec.min_days = value_or<int>(doc, "min_days", spec.min_days);
        spec.fallback_width = value_or<double>(doc, "fallback_width", spec.fallback_width);
        spec.mask_fractions = value_or<std::vector<double>>(doc, "mask_fractions", spec.mask_fractions);
        spec.methods = value_or<std::vector<std::string>>(doc, "methods", spec.methods);
        if (doc.contains("patch_length"))
            spec.patch_length = doc.at("patch_length").get<std::size_t>();
        spec.repeats = value_or<int>(doc, "repeats", spec.repeats);
        spec.seed = value_or<std::uint64_t>(doc, "seed", spec.seed);

        for (int lb : spec.lookback_days)
            if (lb < 1 || lb > 30)
                throw Error(ErrorCode::InvalidArgument, "lookback days must lie in 1..30");
        for (double f : spec.mask_fractions)
            if (!(f > 0.0 && f < 1.0))
                throw Error(ErrorCode::InvalidArgument, "mask fractions must lie in (0, 1)");
        if (spec.test_start && spec.test_end && *spec.test_end < *spec.test_start)
            throw Error(ErrorCode::InvalidArgument, "test_end precedes test_start");

        for (const auto& g : doc.at("grids")) {
            GridSource src;
            if (g.is_string()) {
                src.id = g.get<std::string>();
                spec.grids.push_back(std::move(src));
                continue;
            }
            src.id = g.at("id").get<std::string>();
            if (g.contains("csv"))
                src.csv_path = g.at("csv").get<std::string>();
            if (g.contains("synthetic")) {
                const auto& s = g.at("synthetic");
                src.synthetic_start = parse_date(value_or<std::string>(s, "start", "2020-01-01"));
                src.synthetic_days = value_or<int>(s, "days", 365);
                const auto kind = value_or<std::string>(s, "kind", "periodic");
                if (kind == "periodic") {
                    synthetic::PeriodicParams p;
                    p.mean = value_or<double>(s, "mean", p.mean);
                    p.daily_amplitude = value_or<double>(s, "daily_amplitude", p.daily_amplitude);
                    p.secondary_amplitude = value_or<double>(s, "secondary_amplitude", p.secondary_amplitude);
                    p.secondary_period_hours = value_or<double>(s, "secondary_period_hours", p.secondary_period_hours);
                    p.trend_per_day = value_or<double>(s, "trend_per_day", p.trend_per_day);
                    p.noise_sigma = value_or<double>(s, "noise_sigma", p.noise_sigma);
                    p.seed = value_or<std::uint64_t>(s, "seed", p.seed);
                    src.synthetic = p;
                } else if (kind == "volatile") {
                    synthetic::VolatileParams p;
                    p.low_mean = value_or<double>(s, "low_mean", p.low_mean);
                    p.high_mean = value_or<double>(s, "high_mean", p.high_mean);
                    p.solar_dip = value_or<double>(s, "solar_dip", p.solar_dip);
                    p.switch_probability = value_or<double>(s, "switch_probability", p.switch_probability);
                    p.noise_sigma = value_or<double>(s, "noise_sigma", p.noise_sigma);
                    p.noise_persistence = value_or<double>(s, "noise_persistence", p.noise_persistence);
                    p.seed = value_or<std::uint64_t>(s, "seed", p.seed);
                    src.synthetic = p;
                } else {
                    throw Error(ErrorCode::InvalidArgument, "unknown synthetic kind '" + kind + "'");
                }
            }
            spec.grids.push_back(std::move(src));
        }
        if (spec.grids.empty())
            throw Error(ErrorCode::InvalidArgument, "protocol lists no grids");
        return spec;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("protocol spec: ") + e.what());
    }
}

} // namespace cifcast::eval
