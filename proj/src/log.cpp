#include "otkd/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace otkd::log {
namespace {

Level parse_env() {
  const char* raw = std::getenv("OTKD_LOG");
  if (raw == nullptr) return Level::Warn;
  const std::string_view value(raw);
  if (value == "error") return Level::Error;
  if (value == "info") return Level::Info;
  if (value == "debug") return Level::Debug;
  return Level::Warn;
}

std::atomic<int>& current() {
  static std::atomic<int> level{static_cast<int>(parse_env())};
  return level;
}

const char* tag(Level level) {
  switch (level) {
    case Level::Error: return "error";
    case Level::Warn: return "warn";
    case Level::Info: return "info";
    case Level::Debug: return "debug";
  }
  return "?";
}

}  // namespace

Level threshold() { return static_cast<Level>(current().load(std::memory_order_relaxed)); }

void set_threshold(Level level) { current().store(static_cast<int>(level)); }

void write(Level level, const std::string& message) {
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  std::cerr << "[otkd " << tag(level) << "] " << message << '\n';
}

}  // namespace otkd::log
