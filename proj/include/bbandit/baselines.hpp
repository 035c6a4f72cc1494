#pragma once

// Reference policies: explore-then-commit, the practical phased variant with
// k-means clustering, a collaborative greedy recommender, the clairvoyant
// oracle and uniform random.

#include "bbandit/completion.hpp"
#include "bbandit/kmeans.hpp"
#include "bbandit/policy.hpp"

#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace bbandit {

// ---------------------------------------------------------------------------
// Explore-then-commit

struct EtcConfig {
  /// Fixed Bernoulli sampling probability instead of the tuned formula.
  std::optional<double> p_override;
  /// Every user explores exactly this many distinct random items (ETC(m)).
  std::optional<std::size_t> explore_rounds;
  /// Constant standing in for the Õ(·) of the tuned probability.
  double p_const = 1.0;
  std::optional<double> sigma;
  std::optional<double> mu;
  std::size_t rank = 0;  // 0 takes the instance's C
  double sigma_floor = 1e-3;
  SolverConfig solver{};

  void validate() const {
    if (p_override && !(*p_override > 0.0 && *p_override <= 1.0)) throw ConfigError("ETC p must lie in (0, 1]");
    if (!(p_const > 0.0)) throw ConfigError("ETC constant must be positive");
  }
};

/// p = (N·‖P‖∞)^(−2/3)·(T·σ·r·√(μ³·log d1)/√d2)^(2/3) ∨ μ²/d2, times `p_const`.
inline double etc_sampling_prob(std::size_t users, std::size_t items, std::size_t horizon, double p_max, double sigma,
                                std::size_t rank, double mu, double p_const) {
  const double d1 = static_cast<double>(std::max(users, items));
  const double d2 = static_cast<double>(std::min(users, items));
  const double N = static_cast<double>(items);
  const double inner = static_cast<double>(horizon) * sigma * static_cast<double>(rank) / std::sqrt(d2) *
                       std::sqrt(mu * mu * mu * std::log(d1));
  const double tuned = std::pow(N * p_max, -2.0 / 3.0) * std::pow(inner, 2.0 / 3.0);
  return p_const * std::max(tuned, mu * mu / d2);
}

struct EtcReport {
  double p = 0.0;
  bool clamped = false;
  std::size_t explore_rounds = 0;
};

inline EtcReport run_etc(Simulation& sim, const EtcConfig& cfg, Rng& rng) {
  cfg.validate();
  const Instance& inst = sim.instance();
  const std::size_t M = inst.users;
  const std::size_t N = inst.items;
  const std::size_t r = cfg.rank > 0 ? cfg.rank : inst.clusters;
  const double sigma = cfg.sigma ? *cfg.sigma : inst.noise.sigma;
  const double mu = cfg.mu ? *cfg.mu : diagnostics(inst.P, inst.cluster_of, inst.clusters).mu();
  const double p_max = inst.p_max() > 0.0 ? inst.p_max() : 1.0;

  EtcReport rep;
  std::vector<IndexSet> mask(M);
  if (cfg.explore_rounds) {
    const std::size_t m = std::min(*cfg.explore_rounds, N);
    IndexSet pool = all_indices(N);
    for (std::size_t u = 0; u < M; ++u) {
      std::shuffle(pool.begin(), pool.end(), rng);
      mask[u].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
    }
    rep.p = static_cast<double>(m) / static_cast<double>(N);
  } else {
    rep.p = cfg.p_override ? *cfg.p_override : etc_sampling_prob(M, N, inst.horizon, p_max, sigma, r, mu, cfg.p_const);
    if (rep.p > 1.0 || rep.p <= 0.0) {
      rep.clamped = true;
      rep.p = std::clamp(rep.p, 1e-12, 1.0);
    }
    std::bernoulli_distribution coin(rep.p);
    for (std::size_t u = 0; u < M; ++u) {
      for (std::size_t j = 0; j < N; ++j)
        if (coin(rng)) mask[u].push_back(j);
      std::shuffle(mask[u].begin(), mask[u].end(), rng);
    }
  }
  std::size_t m = 0;
  for (const auto& row : mask) m = std::max(m, row.size());
  m = std::min(m, inst.horizon);
  rep.explore_rounds = m;

  const std::size_t call = sim.begin_estimate();
  std::vector<Sample> samples;
  std::vector<char> in_mask(N, 0);
  for (std::size_t u = 0; u < M; ++u) {
    for (std::size_t j : mask[u]) in_mask[j] = 1;
    for (std::size_t t = 0; t < m; ++t) {
      if (t < mask[u].size() && !sim.blocked(u, mask[u][t])) {
        const std::size_t j = mask[u][t];
        const std::size_t round = sim.round_of(u);
        samples.push_back({u, j, sim.recommend(u, j, Purpose::kExplore)});
        sim.log_consumption(call, u, j, round, false);
        continue;
      }
      std::optional<std::size_t> filler;
      IndexSet outside;
      for (std::size_t j = 0; j < N; ++j)
        if (!in_mask[j] && sim.ledger().total(u, j) == 0) outside.push_back(j);
      filler = random_unblocked(sim, u, outside, rng);
      sim.recommend(u, filler ? *filler : random_unblocked_global(sim, u, rng), Purpose::kFiller);
    }
    for (std::size_t j : mask[u]) in_mask[j] = 0;
  }

  Matrix est = Matrix::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(N));
  if (!samples.empty()) {
    const double sigma_completion = std::max(sigma, cfg.sigma_floor * p_max);
    est = estimate(all_indices(M), all_indices(N), sigma_completion, r, samples, cfg.solver, rng).estimate;
  }
  for (std::size_t u = 0; u < M; ++u) {
    const auto ui = static_cast<Eigen::Index>(u);
    auto score = [&](std::size_t j) { return est(ui, static_cast<Eigen::Index>(j)); };
    while (sim.remaining(u) > 0) sim.recommend(u, best_unblocked_global(sim, u, score), Purpose::kCommit);
  }
  return rep;
}

inline RunResult run_etc(const Instance& inst, const EtcConfig& cfg, std::uint64_t seed) {
  Simulation sim(inst, noise_seed_for(seed));
  Rng rng = make_stream(seed, "etc");
  run_etc(sim, cfg, rng);
  return collect(sim, cfg.explore_rounds ? "etc" + std::to_string(*cfg.explore_rounds) : "etc");
}

// ---------------------------------------------------------------------------
// PB-LATTICE

struct PbLatticeConfig {
  /// Phase length m_ℓ = m_base + m_slope·ℓ.
  std::size_t m_base = 10;
  std::size_t m_slope = 2;
  /// Gap ν_ℓ = ‖P‖∞ / (nu_div·2^ℓ).
  double nu_div = 8.0;
  std::size_t clusters = 0;  // C; 0 takes the instance value
  std::optional<double> sigma;
  double sigma_floor = 1e-3;
  /// λ = lambda_c·σ·√(m_ℓ/M).
  double lambda_c = 10.0;
  KMeansConfig kmeans{};
  SolverConfig solver{};

  std::size_t phase_length(std::size_t phase) const { return m_base + m_slope * phase; }
  double gap(std::size_t phase, double p_max) const { return p_max / (nu_div * std::ldexp(1.0, static_cast<int>(phase))); }

  void validate() const {
    if (m_base + m_slope == 0) throw ConfigError("PB-LATTICE phase length must be at least 1");
    if (!(nu_div > 0.0)) throw ConfigError("PB-LATTICE gap divisor must be positive");
  }
};

struct PbPhaseRecord {
  std::size_t phase = 1;
  std::size_t start_round = 0;
  std::size_t length = 0;
  double nu = 0.0;
  double lambda = 0.0;
  std::vector<IndexSet> groups_in;
  std::vector<IndexSet> groups_out;
  std::vector<std::size_t> active_out;  // active item count of every new group
  std::vector<std::size_t> chosen_k;
};

inline std::vector<PbPhaseRecord> run_pblattice(Simulation& sim, const PbLatticeConfig& cfg, Rng& rng) {
  cfg.validate();
  const Instance& inst = sim.instance();
  const std::size_t C = cfg.clusters > 0 ? cfg.clusters : inst.clusters;
  const double p_max = inst.p_max() > 0.0 ? inst.p_max() : 1.0;
  const double sigma = std::max(cfg.sigma ? *cfg.sigma : inst.noise.sigma, cfg.sigma_floor * p_max);

  std::vector<IndexSet> groups{all_indices(inst.users)};
  std::vector<IndexSet> active{all_indices(inst.items)};
  std::vector<PbPhaseRecord> log;
  std::size_t t = 0;
  for (std::size_t phase = 1; t < inst.horizon; ++phase) {
    PbPhaseRecord rec;
    rec.phase = phase;
    rec.start_round = t;
    rec.length = std::min(cfg.phase_length(phase), inst.horizon - t);
    rec.nu = cfg.gap(phase, p_max);
    rec.lambda = cfg.lambda_c * sigma * std::sqrt(static_cast<double>(cfg.phase_length(phase)) / static_cast<double>(inst.users));
    rec.groups_in = groups;

    std::vector<std::vector<Observation>> obs(groups.size());
    std::vector<std::vector<std::size_t>> obs_round(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
      std::unordered_map<std::size_t, std::size_t> col;
      for (std::size_t c = 0; c < active[i].size(); ++c) col.emplace(active[i][c], c);
      for (std::size_t r = 0; r < rec.length; ++r) {
        for (std::size_t a = 0; a < groups[i].size(); ++a) {
          const std::size_t u = groups[i][a];
          std::size_t j = active[i][std::uniform_int_distribution<std::size_t>(0, active[i].size() - 1)(rng)];
          if (sim.blocked(u, j)) {
            auto alt = random_unblocked(sim, u, active[i], rng);
            j = alt ? *alt : random_unblocked_global(sim, u, rng);
          }
          const std::size_t round = sim.round_of(u);
          const double z = sim.recommend(u, j, Purpose::kExplore);
          auto it = col.find(j);
          if (it != col.end()) {
            obs[i].push_back({a, it->second, z});
            obs_round[i].push_back(round);
          }
        }
      }
    }
    t += rec.length;
    if (t >= inst.horizon) {
      log.push_back(std::move(rec));
      break;
    }

    std::vector<IndexSet> next_groups;
    std::vector<IndexSet> next_active;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const IndexSet& users = groups[i];
      const IndexSet& items = active[i];
      Matrix est = Matrix::Zero(static_cast<Eigen::Index>(users.size()), static_cast<Eigen::Index>(items.size()));
      if (!obs[i].empty()) {
        const std::size_t call = sim.begin_estimate();
        for (std::size_t q = 0; q < obs[i].size(); ++q)
          sim.log_consumption(call, users[obs[i][q].row], items[obs[i][q].col], obs_round[i][q], false);
        CompletionProblem prob{users.size(), items.size(), obs[i], C, sigma};
        SolverConfig sc = cfg.solver;
        sc.lambda_override = rec.lambda;
        est = solve_block(prob, sc).estimate;
      }
      const KMeansResult km = kmeans_elbow(est, std::min(C, users.size()), cfg.kmeans, rng);
      rec.chosen_k.push_back(km.k);
      const std::size_t rank = std::min(inst.horizon, items.size());
      std::vector<double> pivot(users.size());
      std::vector<double> row(items.size());
      for (std::size_t a = 0; a < users.size(); ++a) {
        for (std::size_t c = 0; c < items.size(); ++c) row[c] = est(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
        pivot[a] = kth_largest(row, rank);
      }
      for (std::size_t k = 0; k < km.k; ++k) {
        IndexSet members;
        std::vector<std::size_t> rows;
        for (std::size_t a = 0; a < users.size(); ++a)
          if (km.label[a] == k) {
            members.push_back(users[a]);
            rows.push_back(a);
          }
        if (members.empty()) continue;
        IndexSet keep;
        for (std::size_t c = 0; c < items.size(); ++c)
          for (std::size_t a : rows)
            if (est(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) >= pivot[a] - rec.nu) {
              keep.push_back(items[c]);
              break;
            }
        rec.active_out.push_back(keep.size());
        next_groups.push_back(std::move(members));
        next_active.push_back(std::move(keep));
      }
    }
    groups = std::move(next_groups);
    active = std::move(next_active);
    rec.groups_out = groups;
    log.push_back(std::move(rec));
  }
  return log;
}

inline RunResult run_pblattice(const Instance& inst, const PbLatticeConfig& cfg, std::uint64_t seed) {
  Simulation sim(inst, noise_seed_for(seed));
  Rng rng = make_stream(seed, "pblattice");
  run_pblattice(sim, cfg, rng);
  return collect(sim, "pblattice");
}

// ---------------------------------------------------------------------------
// Collaborative-Greedy

struct GreedyConfig {
  double theta = 0.5;  // random exploration probability t^(−θ)
  double alpha = 0.5;  // joint exploration probability t^(−α)
  /// Minimum fraction of agreeing co-rated items for two users to be neighbours.
  double agreement = 0.5;
};

inline double greedy_explore_prob(std::size_t t, double exponent) {
  return std::pow(static_cast<double>(std::max<std::size_t>(t, 1)), -exponent);
}

/// At round t (1-based) each user random-explores with probability t^(−θ),
/// otherwise joint-explores this round's shared random item with probability
/// t^(−α), otherwise recommends the unblocked item with the best smoothed like
/// rate among its neighbours (users agreeing on at least half of the co-rated
/// items). A reward counts as a like when it is positive.
inline void run_collab_greedy(Simulation& sim, const GreedyConfig& cfg, Rng& rng) {
  const Instance& inst = sim.instance();
  const std::size_t M = inst.users;
  const std::size_t N = inst.items;
  std::vector<double> like_sum(M * N, 0.0);
  std::vector<std::uint32_t> rated(M * N, 0);
  std::vector<std::uint32_t> co(M * M, 0);
  std::vector<std::uint32_t> agree(M * M, 0);
  std::vector<IndexSet> raters(N);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> choice(M);
  std::vector<double> likes(N);
  std::vector<double> counts(N);

  for (std::size_t t = 1; t <= inst.horizon; ++t) {
    const double p_random = greedy_explore_prob(t, cfg.theta);
    const double p_joint = greedy_explore_prob(t, cfg.alpha);
    const std::size_t shared = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
    for (std::size_t u = 0; u < M; ++u) {
      if (unif(rng) < p_random) {
        choice[u] = random_unblocked_global(sim, u, rng);
        continue;
      }
      if (unif(rng) < p_joint) {
        choice[u] = sim.blocked(u, shared) ? random_unblocked_global(sim, u, rng) : shared;
        continue;
      }
      std::fill(likes.begin(), likes.end(), 0.0);
      std::fill(counts.begin(), counts.end(), 0.0);
      for (std::size_t v = 0; v < M; ++v) {
        if (v != u) {
          const std::uint32_t c = co[u * M + v];
          if (c == 0 || static_cast<double>(agree[u * M + v]) < cfg.agreement * static_cast<double>(c)) continue;
        }
        for (std::size_t j = 0; j < N; ++j) {
          const std::uint32_t n = rated[v * N + j];
          if (n == 0) continue;
          likes[j] += like_sum[v * N + j] / n;
          counts[j] += 1.0;
        }
      }
      std::optional<std::size_t> best;
      double best_score = 0.0;
      std::size_t ties = 0;
      for (std::size_t j = 0; j < N; ++j) {
        if (sim.blocked(u, j)) continue;
        const double s = (likes[j] + 1.0) / (counts[j] + 2.0);
        if (!best || s > best_score) {
          best = j;
          best_score = s;
          ties = 1;
        } else if (s == best_score && std::uniform_int_distribution<std::size_t>(0, ties++)(rng) == 0) {
          best = j;
        }
      }
      if (!best) throw ProtocolError("no unblocked item left for user " + std::to_string(u));
      choice[u] = *best;
    }
    for (std::size_t u = 0; u < M; ++u) {
      const std::size_t j = choice[u];
      const double liked = sim.recommend(u, j, Purpose::kRandom) > 0.0 ? 1.0 : 0.0;
      if (rated[u * N + j] == 0) {
        for (std::size_t v : raters[j]) {
          const bool same = (like_sum[v * N + j] / rated[v * N + j] >= 0.5) == (liked >= 0.5);
          ++co[u * M + v];
          ++co[v * M + u];
          if (same) {
            ++agree[u * M + v];
            ++agree[v * M + u];
          }
        }
        raters[j].push_back(u);
      }
      like_sum[u * N + j] += liked;
      ++rated[u * N + j];
    }
  }
}

inline RunResult run_collab_greedy(const Instance& inst, const GreedyConfig& cfg, std::uint64_t seed) {
  Simulation sim(inst, noise_seed_for(seed));
  Rng rng = make_stream(seed, "greedy");
  run_collab_greedy(sim, cfg, rng);
  return collect(sim, "greedy");
}

// ---------------------------------------------------------------------------
// Oracle and random

/// Each user's top ⌈T/B⌉ items by mean reward, best first, each B times in a row.
inline std::vector<IndexSet> oracle_schedule(const Instance& inst) {
  const Matrix mean = mean_reward_matrix(inst);
  std::vector<IndexSet> out(inst.users);
  for (std::size_t u = 0; u < inst.users; ++u) {
    IndexSet order = all_indices(inst.items);
    const auto ui = static_cast<Eigen::Index>(u);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return mean(ui, static_cast<Eigen::Index>(a)) > mean(ui, static_cast<Eigen::Index>(b));
    });
    for (std::size_t t = 0; t < inst.horizon; ++t) out[u].push_back(order[t / inst.budget]);
  }
  return out;
}

inline void run_oracle(Simulation& sim) {
  const auto schedule = oracle_schedule(sim.instance());
  for (std::size_t u = 0; u < schedule.size(); ++u)
    for (std::size_t j : schedule[u]) sim.recommend(u, j, Purpose::kOracle);
}

inline RunResult run_oracle(const Instance& inst, std::uint64_t seed = 0) {
  Simulation sim(inst, noise_seed_for(seed));
  run_oracle(sim);
  return collect(sim, "oracle");
}

inline void run_random(Simulation& sim, Rng& rng) {
  const Instance& inst = sim.instance();
  for (std::size_t t = 0; t < inst.horizon; ++t)
    for (std::size_t u = 0; u < inst.users; ++u) sim.recommend(u, random_unblocked_global(sim, u, rng), Purpose::kRandom);
}

inline RunResult run_random(const Instance& inst, std::uint64_t seed) {
  Simulation sim(inst, noise_seed_for(seed));
  Rng rng = make_stream(seed, "random");
  run_random(sim, rng);
  return collect(sim, "random");
}

}  // namespace bbandit
