#ifndef INTRODRIVE_COMMON_HPP
#define INTRODRIVE_COMMON_HPP

#include <charconv>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace introdrive {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape/dimension mismatch; the message names the offending axis.
struct ShapeError : Error {
  using Error::Error;
};

/// A documented precondition or invariant was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

/// Bad model/run configuration detected at construction time.
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed input file; carries the line number where known.
struct ParseError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// Numerical evaluation produced a non-finite value.
struct EvalError : Error {
  using Error::Error;
};

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Shortest round-trip decimal rendering; every CSV/JSON emitter uses this so
/// seeded re-runs produce byte-identical files.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// SplitMix64 step; used to derive independent per-clip RNG streams from a
/// (run seed, index) pair so clip generation order never matters.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace introdrive

#endif
