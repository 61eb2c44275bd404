#pragma once

#include <string_view>

namespace peri::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2 };

void set_level(Level level);
Level level();

/// Single-line messages to stderr; safe to call from worker threads.
void info(std::string_view message);
void warn(std::string_view message);

}  // namespace peri::log
