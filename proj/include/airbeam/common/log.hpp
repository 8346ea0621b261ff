#pragma once

#include <cstdio>
#include <mutex>
#include <set>
#include <string>

namespace airbeam {

/// Writes a warning to stderr the first time a given message is seen, so
/// per-realization fallbacks do not flood long runs.
inline void warn_once(const std::string& msg) {
  static std::mutex m;
  static std::set<std::string> seen;
  std::lock_guard lock(m);
  if (seen.insert(msg).second) std::fprintf(stderr, "airbeam: warning: %s\n", msg.c_str());
}

inline void log_info(const std::string& msg) { std::fprintf(stderr, "airbeam: %s\n", msg.c_str()); }

}  // namespace airbeam
