#include "log.hpp"

#include <iostream>
#include <mutex>

namespace mswave::log {
namespace {

std::atomic<Level> g_level{Level::Info};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_mutex;

void emit(Level lvl, const char* tag, const std::string& msg) {
  if (lvl < g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[mswave " << tag << "] " << msg << '\n';
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level.load(); }

void debug(const std::string& msg) { emit(Level::Debug, "debug", msg); }
void info(const std::string& msg) { emit(Level::Info, "info", msg); }
void warn(const std::string& msg) {
  ++g_warnings;
  emit(Level::Warn, "warn", msg);
}
void error(const std::string& msg) { emit(Level::Error, "error", msg); }

std::size_t warning_count() { return g_warnings.load(); }
void reset_warning_count() { g_warnings = 0; }

}  // namespace mswave::log
