// Serial reference vs OpenMP kernels. Run with --benchmark_filter=... to pick one.
#include "cifcast/eval.hpp"
#include "cifcast/metrics.hpp"
#include "cifcast/random.hpp"
#include "cifcast/synthetic.hpp"

#include <benchmark/benchmark.h>

using namespace cifcast;

namespace {

std::vector<metrics::Issuance> issuances(std::size_t n) {
    SplitMix64 rng(1);
    std::vector<metrics::Issuance> out(n);
    for (auto& is : out)
        for (int h = 0; h < 96; ++h) {
            is.actual.push_back(50.0 + 500.0 * rng.uniform());
            is.forecast.push_back(50.0 + 500.0 * rng.uniform());
        }
    return out;
}

const backends::BackendRegistry& registry() {
    static const auto reg = [] {
        auto r = std::make_unique<backends::BackendRegistry>();
        backends::register_native_backends(*r);
        return r;
    }();
    return *reg;
}

std::map<std::string, CarbonSeries> grids(int count) {
    std::map<std::string, CarbonSeries> out;
    const Day start = std::chrono::sys_days{std::chrono::year{2020} / 1 / 1};
    for (int g = 0; g < count; ++g) {
        synthetic::VolatileParams p;
        p.seed = static_cast<std::uint64_t>(g + 1);
        const std::string id = "G" + std::to_string(g);
        out.emplace(id, synthetic::volatile_renewable_grid(id, start, 730, p));
    }
    return out;
}

eval::ProtocolSpec spec_for(const std::map<std::string, CarbonSeries>& series, metrics::Protocol protocol) {
    eval::ProtocolSpec spec;
    spec.protocol = protocol;
    spec.backend = "ewma";
    for (const auto& [id, s] : series)
        spec.grids.push_back({id, {}, {}, {}, 0});
    spec.lookback_days = {7, 30};
    spec.test_start = std::chrono::sys_days{std::chrono::year{2021} / 7 / 1};
    return spec;
}

void BM_WindowMapes(benchmark::State& state) {
    const auto data = issuances(static_cast<std::size_t>(state.range(0)));
    const bool parallel = state.range(1) != 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(parallel ? metrics::window_mapes_parallel(data) : metrics::window_mapes(data));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_WindowMapes)->ArgNames({"issuances", "parallel"})->ArgsProduct({{184, 5000}, {0, 1}});

void BM_ForecastProtocol(benchmark::State& state) {
    const auto series = grids(4);
    const auto spec = spec_for(series, metrics::Protocol::uncertainty);
    const auto mode = state.range(0) ? eval::Execution::parallel : eval::Execution::serial;
    for (auto _ : state)
        benchmark::DoNotOptimize(eval::run_forecast_protocol(spec, series, registry(), mode));
}
BENCHMARK(BM_ForecastProtocol)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ImputationProtocol(benchmark::State& state) {
    const auto series = grids(4);
    auto spec = spec_for(series, metrics::Protocol::imputation);
    spec.repeats = 3;
    const auto mode = state.range(0) ? eval::Execution::parallel : eval::Execution::serial;
    for (auto _ : state)
        benchmark::DoNotOptimize(eval::run_imputation_protocol(spec, series, registry(), mode));
}
BENCHMARK(BM_ImputationProtocol)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
