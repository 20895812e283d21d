#pragma once

#include <string_view>

namespace cifcast::log {

enum class Level { debug, info, warning, error, off };

/// Threshold from CIFCAST_LOG (debug|info|warning|error|off), default warning.
Level threshold() noexcept;
void set_threshold(Level level) noexcept;

void write(Level level, std::string_view message);

inline void info(std::string_view m) { write(Level::info, m); }
inline void warning(std::string_view m) { write(Level::warning, m); }
inline void error(std::string_view m) { write(Level::error, m); }

} // namespace cifcast::log
