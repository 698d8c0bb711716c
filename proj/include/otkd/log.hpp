#pragma once

#include <sstream>
#include <string>

namespace otkd::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Threshold read once from OTKD_LOG (error|warn|info|debug); defaults to warn.
Level threshold();
void set_threshold(Level level);
void write(Level level, const std::string& message);

template <typename... Args>
void emit(Level level, Args&&... args) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  std::ostringstream os;
  (os << ... << args);
  write(level, os.str());
}

template <typename... Args>
void error(Args&&... args) { emit(Level::Error, std::forward<Args>(args)...); }
template <typename... Args>
void warn(Args&&... args) { emit(Level::Warn, std::forward<Args>(args)...); }
template <typename... Args>
void info(Args&&... args) { emit(Level::Info, std::forward<Args>(args)...); }
template <typename... Args>
void debug(Args&&... args) { emit(Level::Debug, std::forward<Args>(args)...); }

}  // namespace otkd::log
