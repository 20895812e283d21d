#include "cifcast/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace cifcast::log {

namespace {

Level from_env() noexcept {
    const char* env = std::getenv("CIFCAST_LOG");
    if (!env)
        return Level::warning;
    const std::string_view v(env);
    if (v == "debug") return Level::debug;
    if (v == "info") return Level::info;
    if (v == "error") return Level::error;
    if (v == "off") return Level::off;
    return Level::warning;
}

std::atomic<Level>& current() noexcept {
    static std::atomic<Level> level{from_env()};
    return level;
}

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

constexpr std::string_view tag(Level level) noexcept {
    switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warning: return "warning";
    case Level::error: return "error";
    case Level::off: break;
    }
    return "";
}

} // namespace

Level threshold() noexcept { return current().load(); }
void set_threshold(Level level) noexcept { current().store(level); }

void write(Level level, std::string_view message) {
    if (level < threshold() || level == Level::off)
        return;
    std::lock_guard lock(sink_mutex());
    std::clog << "[cifcast " << tag(level) << "] " << message << '\n';
}

} // namespace cifcast::log
