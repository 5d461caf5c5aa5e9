#pragma once

#include <string>

namespace nwinv::log {

enum class Level { kDebug = 0, kInfo = 1, kWarning = 2, kError = 3, kSilent = 4 };

void set_level(Level level);
Level level();

void info(const std::string& msg);
void warn(const std::string& msg);

// Emits msg at warning level the first time `key` is seen in this process.
void warn_once(const std::string& key, const std::string& msg);

}  // namespace nwinv::log
