#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace badvfl {

// Error taxonomy. Everything user-facing throws one of these with a
// message that names the offending key / id / byte offset.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct InputError : std::runtime_error {
  explicit InputError(const std::string& m) : std::runtime_error(m) {}
};
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& m) : std::runtime_error(m) {}
};
struct AlignmentError : std::runtime_error {
  explicit AlignmentError(const std::string& m) : std::runtime_error(m) {}
};
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& m) : std::runtime_error(m) {}
};
struct InternalError : std::logic_error {
  explicit InternalError(const std::string& m) : std::logic_error(m) {}
};

// ceil(fraction * n) with a guard against FP dust: 0.01 * 2000 must give
// exactly 20, not 21.
inline int ceil_count(double fraction, long n) {
  double v = fraction * static_cast<double>(n);
  return static_cast<int>(std::ceil(v - 1e-9));
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace badvfl
