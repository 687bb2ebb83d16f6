#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace twincert {

inline constexpr const char* kVersion = "0.1.0";

// Input files that cannot be read or parsed.
struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally invalid model data (dimension mismatches and the like).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure inside the optimizer; indicates a bug or an
// ill-conditioned system, never a user error.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Refusal of a request that exceeds a built-in size guard.
struct GuardError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
  static LogLevel lvl = [] {
    const char* v = std::getenv("TWINCERT_LOG");
    if (!v) return LogLevel::Error;
    std::string s(v);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Error;
  }();
  return lvl;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::Debug) std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

// FNV-1a, used for input digests in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace twincert
