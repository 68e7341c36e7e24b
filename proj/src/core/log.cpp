#include "uprm/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace uprm::log {

namespace {

std::atomic<Level> g_level{Level::kInfo};
std::mutex g_mutex;

const char* tag(Level l) {
  switch (l) {
    case Level::kDebug:
      return "debug";
    case Level::kInfo:
      return "info";
    case Level::kWarn:
      return "warn";
    case Level::kError:
      return "error";
    case Level::kOff:
      break;
  }
  return "off";
}

}  // namespace

void set_level(Level level) noexcept { g_level = level; }
Level level() noexcept { return g_level; }

void write(Level level, std::string_view message) {
  if (level < g_level.load() || level == Level::kOff) return;
  std::lock_guard lock(g_mutex);
  std::cerr << '[' << tag(level) << "] " << message << '\n';
}

}  // namespace uprm::log
