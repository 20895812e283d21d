#pragma once

#include "cifcast/error.hpp"
#include "cifcast/series.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace test {

using namespace std::chrono_literals;

inline cifcast::Day day(int y, unsigned m, unsigned d) {
    return cifcast::Day(std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d});
}

inline cifcast::Timestamp at(cifcast::Day d, int hour = 0) { return cifcast::Timestamp(d) + std::chrono::hours{hour}; }

inline cifcast::CarbonSeries hourly(const std::string& grid, cifcast::Day start, const std::vector<double>& v) {
    return cifcast::CarbonSeries::dense(grid, cifcast::Timestamp(start), cifcast::Resolution::hourly, v);
}

inline cifcast::CarbonSeries hourly_opt(const std::string& grid, cifcast::Day start,
                                        std::vector<cifcast::CarbonSeries::Value> v) {
    return cifcast::CarbonSeries(grid, cifcast::Timestamp(start), cifcast::Resolution::hourly, std::move(v));
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("cifcast-" + tag + "-" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace test

/// Asserts that `expr` throws cifcast::Error with the given code.
#define CHECK_THROWS_CODE(expr, ec)                                                       \
    do {                                                                                  \
        bool thrown_ = false;                                                             \
        try {                                                                             \
            (void)(expr);                                                                 \
        } catch (const cifcast::Error& e_) {                                              \
            thrown_ = true;                                                               \
            CHECK_MESSAGE(e_.code() == (ec), "got " << cifcast::to_string(e_.code()));   \
        }                                                                                 \
        CHECK_MESSAGE(thrown_, "expected " << cifcast::to_string(ec));                    \
    } while (0)
