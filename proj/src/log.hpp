#pragma once

#include <atomic>
#include <string>

namespace mswave::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

void set_level(Level level);
Level level();

void debug(const std::string& msg);
void info(const std::string& msg);
void warn(const std::string& msg);
void error(const std::string& msg);

// Number of warnings emitted since process start (or the last reset).
std::size_t warning_count();
void reset_warning_count();

}  // namespace mswave::log
