#include "peri/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace peri::log {

namespace {
std::atomic<Level> g_level{Level::Info};
std::mutex g_mutex;

void emit(std::string_view tag, std::string_view message) {
  std::string line;
  line.reserve(message.size() + 24);
  line.append("[peritumoral] ").append(tag).append(message).push_back('\n');
  std::lock_guard lock(g_mutex);
  std::cerr << line;
}
}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void info(std::string_view message) {
  if (g_level.load() >= Level::Info) emit("", message);
}

void warn(std::string_view message) {
  if (g_level.load() >= Level::Warn) emit("warning: ", message);
}

}  // namespace peri::log
