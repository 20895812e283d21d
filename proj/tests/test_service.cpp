#include "cifcast/datastore.hpp"
#include "cifcast/service.hpp"
#include "cifcast/synthetic.hpp"
#include "oracles.hpp"
#include "sidecar_stub.hpp"
#include "support.hpp"

#include <cstdlib>
#include <fstream>

using namespace cifcast;
using namespace cifcast::service;
using test::day;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kDays = 90;
const Day kFirst = day(2021, 1, 1);
const Day kGapDay = day(2021, 2, 10);

CarbonSeries grid_series(const std::string& id, int days, std::uint64_t seed) {
    synthetic::PeriodicParams p;
    p.noise_sigma = 25.0;
    p.seed = seed;
    const auto dense = synthetic::periodic_grid(id, kFirst, days, p);
    auto values = dense.values();
    // Three missing hours on one day.
    const auto base = static_cast<std::size_t>((kGapDay - kFirst).count() * 24);
    if (base + 24 <= values.size())
        for (std::size_t h : {3, 4, 17})
            values[base + h] = std::nullopt;
    return CarbonSeries(id, dense.start(), Resolution::hourly, values);
}

struct Fixture {
    test::TempDir tmp{"service"};
    std::unique_ptr<ForecastService> service;

    explicit Fixture(ApiConfig config = {}, bool with_second_grid = false) {
        config.data_root = tmp.path();
        config.min_days = 3;
        service = std::make_unique<ForecastService>(config);
        auto& store = service->store();
        store.register_grid({"CISO", "California", "US", Resolution::hourly, {}, {}});
        store.store_actuals(grid_series("CISO", kDays, 1));
        if (with_second_grid) {
            // Only ten days of history: too short for a 30-day lookback.
            store.register_grid({"NEW", "New grid", "US", Resolution::hourly, {}, {}});
            store.store_actuals(grid_series("NEW", 10, 2));
        }
    }
    ForecastService& svc() { return *service; }
};

/// Runs make_server on an ephemeral port for the lifetime of the object.
class LiveServer {
public:
    explicit LiveServer(ForecastService& service) : server_(make_server(service)) {
        port_ = server_->bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_->listen_after_bind(); });
        server_->wait_until_ready();
    }
    ~LiveServer() {
        server_->stop();
        thread_.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

private:
    std::unique_ptr<httplib::Server> server_;
    int port_ = 0;
    std::thread thread_;
};

Day last_day() { return kFirst + std::chrono::days{kDays - 1}; }

} // namespace

TEST_CASE("historical carbon intensity") {
    Fixture f;
    const auto day_json = f.svc().ci_historical("CISO", kGapDay);
    REQUIRE(day_json.size() == 24);
    CHECK(day_json[0].at("timestamp") == "2021-02-10T00:00:00Z");
    int nulls = 0;
    for (const auto& e : day_json)
        nulls += e.at("value").is_null();
    CHECK(nulls == 3);
    CHECK(day_json[3].at("value").is_null());
    CHECK(day_json[5].at("value").is_number());

    CHECK_THROWS_CODE(f.svc().ci_historical("NOPE", kGapDay), ErrorCode::UnknownGrid);
    CHECK_THROWS_CODE(f.svc().ci_historical("CISO", day(2022, 1, 1)), ErrorCode::NoData);

    const auto grids = f.svc().grids();
    REQUIRE(grids.size() == 1);
    CHECK(grids[0].at("grid_id") == "CISO");
}

TEST_CASE("daily issuance, stored forecasts and accuracy") {
    Fixture f({}, true);
    auto& svc = f.svc();
    const Day start = kFirst + std::chrono::days{40};

    CHECK_THROWS_CODE(svc.ci_forecasts("CISO", start, 96, true), ErrorCode::NoForecast);

    std::size_t recorded = 0;
    for (int k = 0; k < 12; ++k) {
        const auto summary = svc.issue_daily_forecasts(start + std::chrono::days{k});
        REQUIRE(summary.grids.size() == 2);
        CHECK(summary.errors() == 1);
        const auto& ciso = summary.grids[0].grid_id == "CISO" ? summary.grids[0] : summary.grids[1];
        const auto& fresh = summary.grids[0].grid_id == "CISO" ? summary.grids[1] : summary.grids[0];
        CHECK(ciso.issued);
        CHECK(fresh.error_code == std::optional<std::string>("insufficient_history"));
        recorded += ciso.residuals_recorded;
        if (k == 0)
            CHECK(ciso.residuals_recorded == 0);
        else
            CHECK(ciso.residuals_recorded > 0);
        // Block b of issue day i has truth once day i + b is over; min_days is 3 here.
        // The first issue day misses three hours of block 0, which then needs a fourth day.
        int expect_blocks = 0;
        for (int b = 0; b < 4; ++b)
            expect_blocks += (k - b >= 3 + (b == 0));
        CHECK(ciso.calibrated_blocks == static_cast<std::size_t>(expect_blocks));
    }
    // Issue days start..start+10 have residuals for every hour whose day is over, minus
    // the three missing hours on the first issue day. Overlapping re-records replace.
    std::size_t expect_entries = 0;
    for (int i = 0; i <= 10; ++i)
        expect_entries += 24 * static_cast<std::size_t>(std::min(4, 11 - i));
    CHECK(svc.store().load_ledger("CISO").total_entries() == expect_entries - 3);
    CHECK(recorded > expect_entries - 3);

    const Day d = start + std::chrono::days{11};
    SUBCASE("forecast payloads") {
        const auto plain = svc.ci_forecasts("CISO", d, 24, false);
        CHECK(plain.at("source") == "stored");
        CHECK(plain.at("forecasts").size() == 24);
        CHECK_FALSE(plain.at("forecasts")[0].contains("lower"));
        CHECK(plain.at("forecasts")[0].at("timestamp") == format_timestamp(Timestamp(d)));

        const auto pi = svc.ci_forecasts("CISO", d, 96, true);
        REQUIRE(pi.at("forecasts").size() == 96);
        for (const auto& e : pi.at("forecasts")) {
            CHECK(e.at("lower").get<double>() <= e.at("value").get<double>());
            CHECK(e.at("value").get<double>() <= e.at("upper").get<double>());
            CHECK(e.at("lower").get<double>() >= 0.0);
        }
        CHECK(pi.at("calibrated") == json::array({true, true, true, true}));
        CHECK(pi.at("alpha") == 0.95);

        CHECK_THROWS_CODE(svc.ci_forecasts("CISO", d, 0, false), ErrorCode::InvalidArgument);
        CHECK_THROWS_CODE(svc.ci_forecasts("CISO", d, 97, false), ErrorCode::HorizonTooLong);
        CHECK_THROWS_CODE(svc.ci_forecasts("NOPE", d, 24, false), ErrorCode::UnknownGrid);

        // Not issued, but computable on demand from history and the stored ledger.
        const Day later = d + std::chrono::days{5};
        CHECK_THROWS_CODE(svc.ci_forecasts("CISO", later, 24, false), ErrorCode::NoForecast);
        const auto od = svc.ci_forecasts("CISO", later, 24, true, true);
        CHECK(od.at("source") == "on_demand");
        CHECK_FALSE(svc.store().load_forecast("CISO", later));
    }
    SUBCASE("accuracy equals MAPE recomputed from the stored files") {
        const auto stored = svc.store().load_forecast("CISO", d);
        REQUIRE(stored);
        const auto truth = svc.store().load_actuals("CISO", d, d + std::chrono::days{3});
        std::vector<double> a, fc;
        for (std::size_t i = 0; i < 96; ++i) {
            a.push_back(*truth[i]);
            fc.push_back(stored->horizon[i]);
        }
        const auto acc = svc.forecast_accuracy("CISO", d, 96);
        CHECK(acc.at("mape").get<double>() == doctest::Approx(oracle::mape(a, fc).percent).epsilon(1e-12));
        CHECK(acc.at("evaluated_hours") == 96);

        const auto short_acc = svc.forecast_accuracy("CISO", d, 5);
        CHECK(short_acc.at("evaluated_hours") == 5);

        CHECK_THROWS_CODE(svc.forecast_accuracy("CISO", d + std::chrono::days{1}, 24), ErrorCode::NoForecast);
        CHECK_THROWS_CODE(svc.forecast_accuracy("CISO", d, 100), ErrorCode::HorizonTooLong);
    }
    SUBCASE("ground truth not yet available") {
        const Day beyond = last_day() + std::chrono::days{1};
        const auto summary = svc.issue_daily_forecasts(beyond);
        CHECK(std::any_of(summary.grids.begin(), summary.grids.end(), [](const auto& g) { return g.issued; }));
        CHECK_THROWS_CODE(svc.forecast_accuracy("CISO", beyond, 24), ErrorCode::TruthUnavailable);
    }
}

TEST_CASE("re-running issuance leaves identical files") {
    Fixture f;
    const Day start = kFirst + std::chrono::days{40};
    for (int k = 0; k < 6; ++k)
        f.svc().issue_daily_forecasts(start + std::chrono::days{k});
    const auto ledger_path = f.tmp.path() / "ledgers" / "CISO.json";
    const auto ledger = datastore::read_file(ledger_path);
    const auto fc = datastore::read_file(f.svc().store().forecast_path("CISO", start + std::chrono::days{5}));
    f.svc().issue_daily_forecasts(start + std::chrono::days{5});
    CHECK(datastore::read_file(ledger_path) == ledger);
    CHECK(datastore::read_file(f.svc().store().forecast_path("CISO", start + std::chrono::days{5})) == fc);
}

TEST_CASE("impute endpoint") {
    Fixture f;
    auto& svc = f.svc();
    const auto out = svc.impute(json::parse(R"({"values":[10,null,30,null,null,60]})"));
    CHECK(out.at("values") == json::array({10.0, 20.0, 30.0, 40.0, 50.0, 60.0}));
    CHECK(out.at("imputed") == 3);
    CHECK(out.at("method") == "linear");

    // The mask can hide observed values; those are re-estimated.
    const auto masked = svc.impute(json::parse(R"({"values":[10,99,30],"mask":[1,0,1],"method":"naive"})"));
    CHECK(masked.at("method") == "naive");
    CHECK(masked.at("values")[0] == 10.0);
    CHECK(masked.at("values")[2] == 30.0);

    CHECK_THROWS_CODE(svc.impute(json::parse(R"({"values":[1,2],"mask":[1]})")), ErrorCode::LengthMismatch);
    CHECK_THROWS_CODE(svc.impute(json::parse(R"({"values":[1,2],"mask":[1,2]})")), ErrorCode::InvalidArgument);
    CHECK_THROWS_CODE(svc.impute(json::parse(R"({"values":[1,null],"mask":[1,1]})")), ErrorCode::InvalidArgument);
    CHECK_THROWS_CODE(svc.impute(json::parse(R"({"values":[null,null]})")), ErrorCode::AllMissing);
    CHECK_THROWS_CODE(svc.impute(json::parse(R"({"values":[]})")), ErrorCode::AllMissing);
    CHECK_THROWS_CODE(svc.impute(json::parse(R"({"values":[1,null],"method":"kriging"})")), ErrorCode::UnknownModel);
    CHECK_THROWS_CODE(svc.impute(json::parse(R"({"series":[1,2]})")), ErrorCode::SchemaViolation);
    CHECK_THROWS_CODE(svc.impute(json::parse(R"({"values":[1,-2,null]})")), ErrorCode::InvalidArgument);
}

TEST_CASE("model selection persists") {
    Fixture f;
    CHECK(f.svc().model().at("model") == "seasonal-naive");
    f.svc().set_model("ewma", Mode::zero_shot);
    CHECK(f.svc().model().at("model") == "ewma");
    CHECK_THROWS_CODE(f.svc().set_model("ewma", Mode::fine_tuned), ErrorCode::InvalidMode);
    CHECK_THROWS_CODE(f.svc().set_model("chronos", Mode::zero_shot), ErrorCode::UnknownModel);
    CHECK_THROWS_CODE(f.svc().set_model("linear", Mode::zero_shot), ErrorCode::InvalidMode);

    ApiConfig config;
    config.data_root = f.tmp.path();
    ForecastService reopened(config);
    CHECK(reopened.model().at("model") == "ewma");
}

TEST_CASE("configuration") {
    const auto c = config_from_json(json::parse(R"({
        "listen": {"host": "0.0.0.0", "port": 9000},
        "default_backend": "ewma",
        "alpha": 0.9,
        "limits": {"max_horizon": 48},
        "remote_backends": [{"name": "moment-ft", "mode": "FT", "impute": true, "endpoint": "http://sidecar:8000",
                             "timeout_ms": 2500}],
        "fetch": {"url": "http://feed/{grid}/{date}", "period_hours": 6, "token_env": "CIFCAST_TEST_TOKEN"}
    })"));
    CHECK(c.host == "0.0.0.0");
    CHECK(c.port == 9000);
    CHECK(c.alpha == 0.9);
    CHECK(c.max_horizon == 48);
    REQUIRE(c.remotes.size() == 1);
    CHECK(c.remotes[0].descriptor.mode == Mode::fine_tuned);
    CHECK(c.remotes[0].timeout == std::chrono::milliseconds{2500});
    CHECK(c.fetch.period == std::chrono::hours{6});

    ::setenv("CIFCAST_REMOTE_MOMENT_FT_ENDPOINT", "http://elsewhere:1", 1);
    ::setenv("CIFCAST_TEST_TOKEN", "t0ken", 1);
    const auto o = config_from_json(json::parse(
        R"({"remote_backends":[{"name":"moment-ft","endpoint":"http://sidecar:8000"}],
            "fetch":{"token_env":"CIFCAST_TEST_TOKEN"}})"));
    CHECK(o.remotes[0].endpoint == "http://elsewhere:1");
    CHECK(o.fetch.token == "t0ken");
    ::unsetenv("CIFCAST_REMOTE_MOMENT_FT_ENDPOINT");
    ::unsetenv("CIFCAST_TEST_TOKEN");

    CHECK_THROWS_CODE(config_from_json(json::parse(R"({"limits":{"max_horizon":200}})")), ErrorCode::InvalidArgument);
    CHECK_THROWS_CODE(config_from_json(json::parse(R"({"alpha":"wide"})")), ErrorCode::SchemaViolation);

    test::TempDir tmp("config");
    std::ofstream(tmp.path() / "c.json") << R"({"listen":{"port":7001}})";
    std::ofstream(tmp.path() / "broken.json") << "{";
    CHECK(load_config(tmp.path() / "c.json").port == 7001);
    CHECK_THROWS_CODE(load_config(tmp.path() / "broken.json"), ErrorCode::ParseError);
    ::setenv("CIFCAST_CONFIG", (tmp.path() / "c.json").c_str(), 1);
    CHECK(resolve_config(std::nullopt).port == 7001);
    ::unsetenv("CIFCAST_CONFIG");
    CHECK(resolve_config(std::nullopt).port == 8080);
}

TEST_CASE("error codes map to HTTP statuses") {
    CHECK(http_status(ErrorCode::UnknownGrid) == 404);
    CHECK(http_status(ErrorCode::NoData) == 404);
    CHECK(http_status(ErrorCode::NoForecast) == 404);
    CHECK(http_status(ErrorCode::UnknownModel) == 404);
    CHECK(http_status(ErrorCode::TruthUnavailable) == 409);
    CHECK(http_status(ErrorCode::ConflictingValue) == 409);
    CHECK(http_status(ErrorCode::InsufficientHistory) == 422);
    CHECK(http_status(ErrorCode::BackendUnavailable) == 503);
    CHECK(http_status(ErrorCode::IoError) == 500);
    CHECK(http_status(ErrorCode::HorizonTooLong) == 400);
    CHECK(http_status(ErrorCode::InvalidArgument) == 400);
}

TEST_CASE("http api") {
    Fixture f;
    const Day d = kFirst + std::chrono::days{45};
    f.svc().issue_daily_forecasts(d);
    LiveServer server(f.svc());
    auto cli = server.client();

    auto get = [&](const std::string& path) {
        auto res = cli.Get(path);
        REQUIRE(res);
        return std::make_pair(res->status, json::parse(res->body));
    };

    auto [s1, grids] = get("/v1/grids");
    CHECK(s1 == 200);
    CHECK(grids[0].at("grid_id") == "CISO");

    auto [s2, hist] = get("/v1/ci/CISO/2021-02-10");
    CHECK(s2 == 200);
    CHECK(hist.size() == 24);

    auto [s3, missing] = get("/v1/ci/NOPE/2021-02-10");
    CHECK(s3 == 404);
    CHECK(missing.at("code") == "unknown_grid");
    CHECK(missing.contains("message"));

    const std::string date = format_date(d);
    auto [s4, fc] = get("/v1/forecasts/CISO/" + date + "?horizon=48&pi=true");
    CHECK(s4 == 200);
    CHECK(fc.at("forecasts").size() == 48);
    CHECK(fc.at("forecasts")[0].contains("upper"));

    auto [s5, too_long] = get("/v1/forecasts/CISO/" + date + "?horizon=97");
    CHECK(s5 == 400);
    CHECK(too_long.at("code") == "horizon_too_long");

    auto [s6, none] = get("/v1/forecasts/CISO/2021-01-05");
    CHECK(s6 == 404);
    CHECK(none.at("code") == "no_forecast");

    auto [s7, acc] = get("/v1/accuracy/CISO/" + date + "?horizon=24");
    CHECK(s7 == 200);
    CHECK(acc.at("evaluated_hours") == 24);

    auto [s8, bad_date] = get("/v1/ci/CISO/2021-13-40");
    CHECK(s8 == 400);
    CHECK(bad_date.at("code") == "parse_error");

    auto [s9, nothing] = get("/v1/nothing");
    CHECK(s9 == 404);
    CHECK(nothing.at("code") == "not_found");

    auto imp = cli.Post("/v1/impute", R"({"values":[1,null,3]})", "application/json");
    REQUIRE(imp);
    CHECK(imp->status == 200);
    CHECK(json::parse(imp->body).at("values") == json::array({1.0, 2.0, 3.0}));

    auto bad_json = cli.Post("/v1/impute", "{nope", "application/json");
    REQUIRE(bad_json);
    CHECK(bad_json->status == 400);

    auto put = cli.Put("/v1/model", R"({"model":"ewma","mode":"ZS"})", "application/json");
    REQUIRE(put);
    CHECK(put->status == 200);
    auto [s10, model] = get("/v1/model");
    CHECK(s10 == 200);
    CHECK(model.at("model") == "ewma");
    auto bad_model = cli.Put("/v1/model", R"({"model":"chronos","mode":"ZS"})", "application/json");
    REQUIRE(bad_model);
    CHECK(bad_model->status == 404);
    CHECK(json::parse(bad_model->body).at("code") == "unknown_model");
}

TEST_CASE("remote default backend") {
    test::StubServer stub([](const std::string&, const json& body, httplib::Response& res) {
        const auto& lb = body.at("lookback");
        std::vector<double> out;
        for (int i = 0; i < body.at("horizon_hours").get<int>(); ++i)
            out.push_back(lb[lb.size() - 24 + static_cast<std::size_t>(i % 24)].get<double>());
        test::reply(res, {{"values", out}});
    });
    ApiConfig config;
    config.default_backend = "sidecar";
    config.remotes.push_back({{"sidecar", Mode::zero_shot, true, false, 96}, stub.endpoint(), std::chrono::seconds{5}});
    Fixture f(config);
    const Day d = kFirst + std::chrono::days{45};
    const auto summary = f.svc().issue_daily_forecasts(d);
    CHECK(summary.backend == "sidecar");
    CHECK(summary.errors() == 0);
    CHECK(stub.bodies().size() == 1);
    const auto sent = json::parse(stub.bodies()[0]);
    CHECK(sent.at("lookback").size() == 30 * 24);
    CHECK(sent.at("horizon_hours") == 96);
    // The stub is seasonal naive: same answer as the native backend.
    const auto stored = f.svc().store().load_forecast("CISO", d);
    const auto lb = f.svc().store().load_actuals("CISO", d - std::chrono::days{1}, d - std::chrono::days{1});
    REQUIRE(stored);
    CHECK(stored->backend.name == "sidecar");
    for (std::size_t i = 0; i < 24; ++i)
        CHECK(stored->horizon[i] == doctest::Approx(*lb[i]).epsilon(1e-6));

    ApiConfig down;
    down.default_backend = "sidecar";
    down.remotes.push_back({{"sidecar", Mode::zero_shot, true, false, 96},
                            "http://127.0.0.1:" + std::to_string(test::closed_port()), std::chrono::seconds{1}});
    Fixture g(down);
    const auto failed = g.svc().issue_daily_forecasts(d);
    REQUIRE(failed.grids.size() == 1);
    CHECK(failed.grids[0].error_code == std::optional<std::string>("backend_unavailable"));
    CHECK_THROWS_CODE(g.svc().ci_forecasts("CISO", d, 24, false, true), ErrorCode::BackendUnavailable);
}
