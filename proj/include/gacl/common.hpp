#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gacl {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy; the CLI maps these onto its exit-code contract
// (IoError -> 2, ValidationError -> 3, NumericError -> 4).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Malformed input text (unreadable data, like a truncated line); exits like
// an I/O failure, unlike semantic validation of well-formed records.
struct ParseError : IoError {
  using IoError::IoError;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : ValidationError {
  using ValidationError::ValidationError;
};

/// FNV-1a 64-bit over raw bytes. Stable across platforms; used for content
/// and config hashes in manifests (audit identity, not cryptography).
inline uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

/// Fixed-width lowercase hex, the manifest spelling of 64-bit hashes.
std::string hex64(uint64_t v);

/// splitmix64 finalizer; used to derive independent seeds from (seed, tag) pairs.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix64(a, b), c); }

/// Deterministic RNG with hand-rolled distributions so streams are
/// bit-identical across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix64(seed)) {}

  uint64_t u64() {
    // xorshift* over a splitmix-initialized state
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased-enough bounded draw (Lemire multiply-shift).
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<unsigned __int128>(u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; second draw cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level();
void log_msg(LogLevel level, const std::string& msg);

inline void log_error(const std::string& m) { log_msg(LogLevel::Error, m); }
inline void log_info(const std::string& m) { log_msg(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log_msg(LogLevel::Debug, m); }

}  // namespace gacl
