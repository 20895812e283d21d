#include "cifcast/report.hpp"

#include "cifcast/error.hpp"

#include <cstdio>
#include <sstream>

namespace cifcast::metrics {

using json = nlohmann::json;

std::string_view to_string(Protocol protocol) noexcept {
    switch (protocol) {
    case Protocol::forecast_4d: return "forecast_4d";
    case Protocol::forecast_extended: return "forecast_extended";
    case Protocol::uncertainty: return "uncertainty";
    case Protocol::imputation: return "imputation";
    }
    return "unknown";
}

Protocol parse_protocol(std::string_view text) {
    for (auto p : {Protocol::forecast_4d, Protocol::forecast_extended, Protocol::uncertainty, Protocol::imputation})
        if (text == to_string(p))
            return p;
    throw Error(ErrorCode::InvalidArgument, "unknown protocol '" + std::string(text) + "'");
}

namespace {

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + '"';
}

std::string pad(std::string s, std::size_t width, bool left = false) {
    if (s.size() >= width)
        return s;
    return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

} // namespace

json to_json(const EvalReport& r) {
    json config{{"lookback_days", r.config.lookback_days},
                {"horizon_hours", r.config.horizon_hours},
                {"backend", r.config.backend},
                {"imputer", r.config.imputer},
                {"alpha", r.config.alpha},
                {"window_days", r.config.window_days},
                {"mask_fraction", opt(r.config.mask_fraction)},
                {"patch_length", opt(r.config.patch_length)},
                {"method", opt(r.config.method)},
                {"seed", r.config.seed}};
    json j{{"grid_id", r.grid_id},
           {"protocol", to_string(r.protocol)},
           {"mean_mape", r.mean_mape},
           {"p90_mape", r.p90_mape},
           {"p90_mape_basis", "per-issuance window MAPE"},
           {"hourly_p90_mape", r.hourly_p90_mape},
           {"mape_by_day", r.mape_by_day},
           {"coverage_overall", opt(r.coverage_overall)},
           {"coverage_by_day", opt(r.coverage_by_day)},
           {"mean_niw", opt(r.mean_niw)},
           {"nrmse", opt(r.nrmse)},
           {"n_issuances", r.n_issuances},
           {"n_interval_issuances", r.n_interval_issuances},
           {"uncalibrated_blocks", r.uncalibrated_blocks},
           {"excluded_hours", r.excluded_hours},
           {"config", std::move(config)},
           {"error", opt(r.error)}};
    return j;
}

json to_json(const std::vector<EvalReport>& reports) {
    json arr = json::array();
    for (const auto& r : reports)
        arr.push_back(to_json(r));
    return arr;
}

std::string to_table(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    std::size_t grid_w = 4;
    for (const auto& r : reports)
        grid_w = std::max(grid_w, r.grid_id.size());
    const bool imputation = !reports.empty() && reports.front().protocol == Protocol::imputation;

    if (imputation) {
        out << pad("Grid", grid_w, true) << "  " << pad("Method", 12, true) << pad("Mask", 8) << pad("nRMSE", 10)
            << '\n';
        for (const auto& r : reports) {
            out << pad(r.grid_id, grid_w, true) << "  " << pad(r.config.method.value_or("-"), 12, true)
                << pad(r.config.mask_fraction ? fixed(100.0 * *r.config.mask_fraction, 1) + "%" : "-", 8)
                << pad(r.error ? "error" : (r.nrmse ? fixed(*r.nrmse, 4) : "-"), 10) << '\n';
        }
        return out.str();
    }

    out << pad("Grid", grid_w, true) << pad("L(d)", 6) << pad("Mean", 9) << pad("90th", 9) << pad("Cov", 8)
        << pad("D1", 7) << pad("D2", 7) << pad("D3", 7) << pad("D4", 7) << pad("NIW", 8) << '\n';
    for (const auto& r : reports) {
        out << pad(r.grid_id, grid_w, true) << pad(std::to_string(r.config.lookback_days), 6);
        if (r.error) {
            out << "  error: " << *r.error << '\n';
            continue;
        }
        out << pad(fixed(r.mean_mape), 9) << pad(fixed(r.p90_mape), 9);
        out << pad(r.coverage_overall ? fixed(*r.coverage_overall, 1) : "-", 8);
        for (int d = 0; d < 4; ++d)
            out << pad(r.coverage_by_day ? fixed((*r.coverage_by_day)[static_cast<std::size_t>(d)], 1) : "-", 7);
        out << pad(r.mean_niw ? fixed(*r.mean_niw, 1) : "-", 8) << '\n';
    }
    return out.str();
}

std::string to_csv(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << "grid_id,protocol,lookback_days,horizon_hours,backend,method,mask_fraction,mean_mape,p90_mape,"
           "hourly_p90_mape,coverage_overall,coverage_d1,coverage_d2,coverage_d3,coverage_d4,mean_niw,nrmse,"
           "n_issuances,error\n";
    auto num = [](const std::optional<double>& v) { return v ? fixed(*v, 6) : std::string(); };
    for (const auto& r : reports) {
        out << r.grid_id << ',' << to_string(r.protocol) << ',' << r.config.lookback_days << ','
            << r.config.horizon_hours << ',' << r.config.backend << ',' << r.config.method.value_or("") << ','
            << num(r.config.mask_fraction) << ',' << fixed(r.mean_mape, 6) << ',' << fixed(r.p90_mape, 6) << ','
            << fixed(r.hourly_p90_mape, 6) << ',' << num(r.coverage_overall);
        for (std::size_t d = 0; d < 4; ++d)
            out << ',' << (r.coverage_by_day ? fixed((*r.coverage_by_day)[d], 6) : std::string());
        out << ',' << num(r.mean_niw) << ',' << num(r.nrmse) << ',' << r.n_issuances << ','
            << (r.error ? csv_field(*r.error) : std::string()) << '\n';
    }
    return out.str();
}

} // namespace cifcast::metrics
