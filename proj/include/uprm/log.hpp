#pragma once

#include <string_view>

namespace uprm::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

/// Messages below the threshold are dropped. Default: kInfo.
void set_level(Level level) noexcept;
Level level() noexcept;

/// Writes "[level] message" to stderr. Thread-safe.
void write(Level level, std::string_view message);

inline void debug(std::string_view m) { write(Level::kDebug, m); }
inline void info(std::string_view m) { write(Level::kInfo, m); }
inline void warn(std::string_view m) { write(Level::kWarn, m); }
inline void error(std::string_view m) { write(Level::kError, m); }

}  // namespace uprm::log
