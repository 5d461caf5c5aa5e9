#include "nwinv/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <set>

namespace nwinv::log {

namespace {

std::atomic<Level> g_level{Level::kWarning};
std::mutex g_mutex;
std::set<std::string> g_seen;

void emit(Level lvl, const char* tag, const std::string& msg) {
  if (lvl < g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[nwinv " << tag << "] " << msg << '\n';
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void info(const std::string& msg) { emit(Level::kInfo, "info", msg); }
void warn(const std::string& msg) { emit(Level::kWarning, "warn", msg); }

void warn_once(const std::string& key, const std::string& msg) {
  {
    std::lock_guard<std::mutex> lock(g_mutex);
    if (!g_seen.insert(key).second) return;
  }
  warn(msg);
}

}  // namespace nwinv::log
