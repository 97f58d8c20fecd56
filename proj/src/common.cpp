#include "gacl/common.hpp"

#include <cstdio>
#include <cstdlib>

namespace gacl {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("GACL_LOG");
    if (!env) return LogLevel::Info;
    std::string_view v(env);
    if (v == "error" || v == "0") return LogLevel::Error;
    if (v == "debug" || v == "2") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

void log_msg(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  const char* tag = level == LogLevel::Error ? "error" : level == LogLevel::Info ? "info" : "debug";
  std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

}  // namespace gacl
