// cifcast: operator CLI and HTTP server.

#include "cifcast/datastore.hpp"
#include "cifcast/error.hpp"
#include "cifcast/eval.hpp"
#include "cifcast/log.hpp"
#include "cifcast/service.hpp"
#include "cifcast/synthetic.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <chrono>
#include <iostream>
#include <iterator>
#include <thread>

using namespace cifcast;
using json = nlohmann::json;

namespace {

Day today_utc() { return floor_day(std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now())); }

std::string read_input(const std::string& path) {
    if (path == "-")
        return std::string(std::istreambuf_iterator<char>(std::cin), {});
    return datastore::read_file(path);
}

std::map<std::string, CarbonSeries> load_eval_series(const eval::ProtocolSpec& spec, const datastore::DataStore& store) {
    std::map<std::string, CarbonSeries> out;
    for (const auto& g : spec.grids) {
        if (const auto* p = std::get_if<synthetic::PeriodicParams>(&g.synthetic)) {
            out.emplace(g.id, synthetic::periodic_grid(g.id, g.synthetic_start, g.synthetic_days, *p));
        } else if (const auto* v = std::get_if<synthetic::VolatileParams>(&g.synthetic)) {
            out.emplace(g.id, synthetic::volatile_renewable_grid(g.id, g.synthetic_start, g.synthetic_days, *v));
        } else if (g.csv_path) {
            out.emplace(g.id, datastore::parse_actuals_csv(datastore::read_file(*g.csv_path), g.id));
        } else {
            const auto range = store.actuals_range(g.id);
            if (!range)
                throw Error(ErrorCode::NoData, "no stored actuals for grid '" + g.id + "'");
            out.emplace(g.id, store.load_actuals(g.id, range->first, range->second));
        }
    }
    return out;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Carbon-intensity forecasting service"};
    app.require_subcommand(1);
    std::optional<std::string> config_path;
    app.add_option("-c,--config", config_path, "JSON config file (default: $CIFCAST_CONFIG)");
    std::optional<std::string> data_root;
    app.add_option("-d,--data", data_root, "Datastore root (overrides the config)");
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log at info level");

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    std::optional<std::string> host;
    std::optional<int> port;
    bool serve_on_demand = false;
    serve->add_option("--host", host);
    serve->add_option("--port", port);
    serve->add_flag("--on-demand", serve_on_demand, "Compute missing forecasts instead of answering 404");

    auto* ingest = app.add_subcommand("ingest", "Register a grid and store actuals from a CSV or a generator");
    std::string ingest_grid, ingest_csv, ingest_kind, ingest_name, ingest_region, ingest_start = "2020-01-01";
    int ingest_days = 730;
    std::uint64_t ingest_seed = 1;
    double ingest_noise = -1.0;
    bool ingest_overwrite = false;
    ingest->add_option("--grid", ingest_grid)->required();
    ingest->add_option("--name", ingest_name);
    ingest->add_option("--region", ingest_region);
    auto* csv_opt = ingest->add_option("--csv", ingest_csv, "Actuals CSV (timestamp_utc,carbon_intensity_gco2eq_kwh)");
    ingest->add_option("--synthetic", ingest_kind, "periodic | volatile")
        ->check(CLI::IsMember({"periodic", "volatile"}))
        ->excludes(csv_opt);
    ingest->add_option("--start", ingest_start, "First synthetic day");
    ingest->add_option("--days", ingest_days, "Synthetic length in days");
    ingest->add_option("--seed", ingest_seed);
    ingest->add_option("--noise", ingest_noise, "Noise sigma (gCO2eq/kWh)");
    ingest->add_flag("--overwrite", ingest_overwrite, "Replace conflicting stored values");

    auto* fetch = app.add_subcommand("fetch", "Download, validate and store actuals for every grid");
    std::optional<std::string> fetch_date;
    bool fetch_loop = false;
    fetch->add_option("--date", fetch_date, "Day to fetch (default: today UTC)");
    fetch->add_flag("--loop", fetch_loop, "Repeat every fetch period");

    auto* issue = app.add_subcommand("issue", "Issue daily 96-hour forecasts with intervals");
    std::optional<std::string> issue_date, issue_from, issue_to;
    auto* date_opt = issue->add_option("--date", issue_date, "Issue day (default: today UTC)");
    issue->add_option("--from", issue_from)->excludes(date_opt);
    issue->add_option("--to", issue_to)->excludes(date_opt);

    auto* impute = app.add_subcommand("impute", "Fill missing values in a JSON payload");
    std::string impute_input = "-";
    impute->add_option("input", impute_input, "Payload file or - for stdin");

    auto* ev = app.add_subcommand("eval", "Run an evaluation protocol");
    std::string eval_spec, eval_out = "reports";
    std::vector<std::string> eval_formats{"json", "table", "csv"};
    bool eval_serial = false;
    ev->add_option("spec", eval_spec, "Protocol spec (JSON)")->required()->check(CLI::ExistingFile);
    ev->add_option("-o,--out", eval_out, "Output directory");
    ev->add_option("--format", eval_formats)->delimiter(',')->check(CLI::IsMember({"json", "table", "csv"}));
    ev->add_flag("--serial", eval_serial, "Run grids one after another");

    auto* grids = app.add_subcommand("grids", "List supported grids");

    auto* ci = app.add_subcommand("ci", "Historical carbon intensity for one day");
    std::string q_grid, q_date;
    ci->add_option("grid", q_grid)->required();
    ci->add_option("date", q_date)->required();

    auto* fc = app.add_subcommand("forecast", "Stored (or on-demand) forecast for an issue day");
    int q_horizon = 96;
    bool q_pi = false, q_no_on_demand = false;
    fc->add_option("grid", q_grid)->required();
    fc->add_option("date", q_date)->required();
    fc->add_option("--horizon", q_horizon);
    fc->add_flag("--pi", q_pi, "Include prediction intervals");
    fc->add_flag("--stored-only", q_no_on_demand, "Fail instead of computing a missing forecast");

    auto* acc = app.add_subcommand("accuracy", "MAPE of a stored forecast against ground truth");
    acc->add_option("grid", q_grid)->required();
    acc->add_option("date", q_date)->required();
    acc->add_option("--horizon", q_horizon);

    auto* model = app.add_subcommand("model", "Show or switch the default forecasting backend");
    std::optional<std::string> model_name;
    std::string model_mode = "ZS";
    model->add_option("--set", model_name);
    model->add_option("--mode", model_mode, "ZS or FT");

    CLI11_PARSE(app, argc, argv);
    if (verbose)
        log::set_threshold(log::Level::info);

    try {
        auto config = service::resolve_config(config_path ? std::optional<std::filesystem::path>(*config_path)
                                                          : std::nullopt);
        if (data_root)
            config.data_root = *data_root;

        if (*ev) {
            const auto spec = eval::parse_protocol_spec(json::parse(datastore::read_file(eval_spec)));
            datastore::DataStore store(config.data_root);
            const auto series = load_eval_series(spec, store);
            backends::BackendRegistry registry;
            backends::register_native_backends(registry, config.ewma_alpha);
            for (const auto& r : config.remotes)
                registry.register_backend(r.descriptor, r.endpoint, r.timeout);
            const auto exec = eval_serial ? eval::Execution::serial : eval::Execution::parallel;
            const auto reports = spec.protocol == metrics::Protocol::imputation
                                     ? eval::run_imputation_protocol(spec, series, registry, exec)
                                     : eval::run_forecast_protocol(spec, series, registry, exec);
            std::vector<eval::ReportFormat> formats;
            for (const auto& f : eval_formats)
                formats.push_back(f == "json" ? eval::ReportFormat::json
                                  : f == "csv" ? eval::ReportFormat::csv
                                               : eval::ReportFormat::table);
            std::filesystem::create_directories(eval_out);
            for (const auto& p : eval::emit_report(reports, formats, eval_out))
                std::cerr << "wrote " << p.string() << '\n';
            std::cout << metrics::to_table(reports);
            if (spec.protocol == metrics::Protocol::forecast_extended)
                std::cout << '\n' << eval::format_degradation(eval::degradation_table(reports));
            return 0;
        }

        if (*serve && serve_on_demand)
            config.on_demand = true;
        service::ForecastService svc(config);

        if (*serve) {
            auto server = service::make_server(svc);
            const std::string h = host.value_or(svc.config().host);
            const int p = port.value_or(svc.config().port);
            std::cerr << "listening on " << h << ':' << p << '\n';
            if (!server->listen(h, p))
                throw Error(ErrorCode::IoError, "cannot listen on " + h + ":" + std::to_string(p));
            return 0;
        }
        if (*ingest) {
            datastore::GridInfo info;
            info.grid_id = ingest_grid;
            info.display_name = ingest_name.empty() ? ingest_grid : ingest_name;
            info.region = ingest_region;
            CarbonSeries series;
            if (!ingest_csv.empty()) {
                series = datastore::parse_actuals_csv(datastore::read_file(ingest_csv), ingest_grid);
            } else if (ingest_kind == "volatile") {
                synthetic::VolatileParams p;
                p.seed = ingest_seed;
                if (ingest_noise >= 0)
                    p.noise_sigma = ingest_noise;
                series = synthetic::volatile_renewable_grid(ingest_grid, parse_date(ingest_start), ingest_days, p);
            } else if (ingest_kind == "periodic") {
                synthetic::PeriodicParams p;
                p.seed = ingest_seed;
                p.noise_sigma = ingest_noise >= 0 ? ingest_noise : 0.1 * p.mean;
                series = synthetic::periodic_grid(ingest_grid, parse_date(ingest_start), ingest_days, p);
            } else {
                throw Error(ErrorCode::InvalidArgument, "ingest needs --csv or --synthetic");
            }
            info.resolution = series.resolution();
            svc.store().register_grid(info);
            const auto r = svc.store().store_actuals(series, ingest_overwrite);
            print({{"grid_id", ingest_grid},
                   {"rows_added", r.rows_added},
                   {"rows_unchanged", r.rows_unchanged},
                   {"rows_overwritten", r.rows_overwritten}});
            return 0;
        }
        if (*fetch) {
            if (svc.config().fetch.source_url_template.empty())
                throw Error(ErrorCode::InvalidArgument, "config has no fetch.url");
            int failures = 0;
            do {
                const Day d = fetch_date ? parse_date(*fetch_date) : today_utc();
                const auto summary = datastore::run_fetch_cycle(svc.config().fetch, svc.store().catalog(), svc.store(), d);
                json out = json::array();
                for (const auto& g : summary.grids) {
                    json j{{"grid_id", g.grid_id}, {"rows_added", g.rows_added}};
                    if (g.error_code)
                        j["error"] = {{"code", *g.error_code}, {"message", g.message}};
                    out.push_back(std::move(j));
                }
                print({{"date", format_date(d)}, {"grids", out}});
                failures = static_cast<int>(summary.errors());
                if (fetch_loop)
                    std::this_thread::sleep_for(datastore::effective_period(svc.config().fetch));
            } while (fetch_loop);
            return failures ? 1 : 0;
        }
        if (*issue) {
            Day from = issue_date ? parse_date(*issue_date) : today_utc();
            Day to = from;
            if (issue_from || issue_to) {
                if (!issue_from || !issue_to)
                    throw Error(ErrorCode::InvalidArgument, "--from and --to go together");
                from = parse_date(*issue_from);
                to = parse_date(*issue_to);
            }
            std::size_t errors = 0;
            for (Day d = from; d <= to; d += std::chrono::days{1}) {
                const auto summary = svc.issue_daily_forecasts(d);
                errors += summary.errors();
                std::cout << service::to_json(summary).dump() << '\n';
            }
            return errors ? 1 : 0;
        }
        if (*impute) {
            print(svc.impute(json::parse(read_input(impute_input))));
            return 0;
        }
        if (*grids) {
            print(svc.grids());
            return 0;
        }
        if (*ci) {
            print(svc.ci_historical(q_grid, parse_date(q_date)));
            return 0;
        }
        if (*fc) {
            print(svc.ci_forecasts(q_grid, parse_date(q_date), q_horizon, q_pi, !q_no_on_demand));
            return 0;
        }
        if (*acc) {
            print(svc.forecast_accuracy(q_grid, parse_date(q_date), q_horizon));
            return 0;
        }
        if (*model) {
            print(model_name ? svc.set_model(*model_name, parse_mode(model_mode)) : svc.model());
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << json{{"code", to_string(e.code())}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"code", "internal"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
