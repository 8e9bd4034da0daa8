#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace musedit {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Thrown on any contract violation (bad arguments, shape mismatches,
// malformed files). The CLI maps these to a nonzero exit status.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define ME_CHECK(cond, msg)                           \
  do {                                                \
    if (!(cond)) throw ::musedit::Error(msg);         \
  } while (0)

inline void check_finite(const Mat& m, const std::string& what) {
  if (!m.allFinite()) throw Error("non-finite values in " + what);
}

// FNV-1a, used for config digests and seed derivation.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 14695981039346656037ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace musedit
