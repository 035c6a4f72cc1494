#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bbandit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexSet = std::vector<std::size_t>;
using Rng = std::mt19937_64;

/// Invalid user-supplied configuration (bad spec, bad JSON, out-of-range hyperparameter).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A policy tried to recommend an item that is already used up for a user.
/// Seeing this in any run means the calling policy is broken.
class BudgetViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Protocol breakage at simulation time (horizon overrun, incomplete trace, ...).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based seed derivation. Streams named differently (or with different
/// counters) are statistically independent, and deriving one never advances
/// another.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                           std::uint64_t counter = 0) noexcept {
  return splitmix64(splitmix64(master ^ fnv1a(stream)) + splitmix64(counter + 0x632be59bd9b4e019ULL));
}

inline Rng make_stream(std::uint64_t master, std::string_view stream, std::uint64_t counter = 0) {
  return Rng{derive_seed(master, stream, counter)};
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

/// Number of golden items per user, ⌈T/B⌉.
inline std::size_t golden_count(std::size_t horizon, std::size_t budget) {
  return ceil_div(horizon, budget);
}

}  // namespace bbandit
