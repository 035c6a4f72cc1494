#pragma once

// Pieces shared by every policy: run results and unblocked-item selection.

#include "bbandit/env.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bbandit {

struct RunResult {
  std::string algorithm;
  RegretTrace trace;
  std::vector<Event> events;
  std::vector<ConsumeRecord> consumption;
  /// Largest number of times any (user, item) pair was recommended.
  std::uint32_t max_count = 0;
  bool ledger_ok = true;
  std::size_t estimate_calls = 0;
};

inline RunResult collect(const Simulation& sim, std::string algorithm) {
  RunResult r;
  r.algorithm = std::move(algorithm);
  r.trace = sim.trace();
  r.events = sim.events();
  r.consumption = sim.consumption();
  r.max_count = sim.ledger().max_total();
  r.ledger_ok = sim.ledger().invariants_hold();
  r.estimate_calls = sim.estimate_calls();
  return r;
}

/// Seed of the reward-noise stream; shared by all policies run with the same seed.
inline std::uint64_t noise_seed_for(std::uint64_t seed) { return derive_seed(seed, "noise"); }

/// Unblocked candidate with the highest score; the earliest candidate wins ties.
template <class Score>
std::optional<std::size_t> best_unblocked(const Simulation& sim, std::size_t u, const IndexSet& candidates,
                                          Score&& score) {
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t j : candidates) {
    if (sim.blocked(u, j)) continue;
    const double s = score(j);
    if (!best || s > best_score) {
      best = j;
      best_score = s;
    }
  }
  return best;
}

/// Highest-scoring unblocked item over the whole catalogue. A user with rounds
/// left always has one because N·B ≥ T.
template <class Score>
std::size_t best_unblocked_global(const Simulation& sim, std::size_t u, Score&& score) {
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t j = 0; j < sim.instance().items; ++j) {
    if (sim.blocked(u, j)) continue;
    const double s = score(j);
    if (!best || s > best_score) {
      best = j;
      best_score = s;
    }
  }
  if (!best) throw ProtocolError("no unblocked item left for user " + std::to_string(u));
  return *best;
}

/// Uniformly random unblocked candidate, if any.
inline std::optional<std::size_t> random_unblocked(const Simulation& sim, std::size_t u, const IndexSet& candidates,
                                                   Rng& rng) {
  std::size_t seen = 0;
  std::optional<std::size_t> pick;
  for (std::size_t j : candidates) {
    if (sim.blocked(u, j)) continue;
    if (std::uniform_int_distribution<std::size_t>(0, seen++)(rng) == 0) pick = j;
  }
  return pick;
}

inline std::size_t random_unblocked_global(const Simulation& sim, std::size_t u, Rng& rng) {
  std::size_t seen = 0;
  std::optional<std::size_t> pick;
  for (std::size_t j = 0; j < sim.instance().items; ++j) {
    if (sim.blocked(u, j)) continue;
    if (std::uniform_int_distribution<std::size_t>(0, seen++)(rng) == 0) pick = j;
  }
  if (!pick) throw ProtocolError("no unblocked item left for user " + std::to_string(u));
  return *pick;
}

inline IndexSet all_indices(std::size_t n) {
  IndexSet out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

/// Value of the k-th largest entry (1-based, k clipped to the available range).
inline double kth_largest(std::vector<double> values, std::size_t k) {
  if (values.empty()) throw ConfigError("kth_largest of an empty set");
  k = std::clamp<std::size_t>(k, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end(),
                   std::greater<>());
  return values[k - 1];
}

}  // namespace bbandit
