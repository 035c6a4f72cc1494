#pragma once

// B-LATTICE: phased elimination over nice user groups. Each phase runs an exploit
// component (joint golden items), an explore component (Bernoulli mask plus matrix
// completion) and a user-clustering step on the fresh estimate.

#include "bbandit/completion.hpp"
#include "bbandit/policy.hpp"
#include "bbandit/union_find.hpp"

#include <cmath>
#include <deque>
#include <numeric>
#include <optional>
#include <unordered_set>
#include <vector>

namespace bbandit {

struct BlatticeHyper {
  /// Rank bound C; 0 takes the instance's cluster count.
  std::size_t clusters = 0;
  /// Noise scale σ; unset takes the instance's noise model.
  std::optional<double> sigma;
  /// ‖P‖∞; unset takes the instance value.
  std::optional<double> p_max;
  /// Incoherence bound; unset takes the diagnostics of the full instance.
  std::optional<double> mu;
  /// Accuracy of the (empty) initial estimate; unset means ‖P‖∞.
  std::optional<double> eps1;
  /// Constant c of the sampling probability.
  double c = 1.0;
  /// p is never below p_floor_c·C·log(d1)/d2, roughly the sample count below which
  /// completion cannot succeed at all (matters when σ is tiny).
  double p_floor_c = 2.0;
  /// Completion noise scale is at least sigma_floor·‖P‖∞ so that λ stays positive.
  double sigma_floor = 1e-4;
  SolverConfig solver{};
  std::size_t max_phases = 64;
};

/// What happened to one group in one phase.
struct PhaseRecord {
  std::size_t phase = 1;
  std::size_t start_round = 0;
  IndexSet users;
  std::size_t items_before = 0;
  std::size_t items_after_exploit = 0;
  std::size_t exploit_rounds = 0;
  double delta = 0.0;
  double delta_next = 0.0;
  double p = 0.0;
  bool explored = false;
  std::size_t explore_rounds = 0;
  std::size_t observations = 0;
  std::size_t dropped = 0;
  std::vector<IndexSet> components;       // user partition produced by the phase
  std::vector<IndexSet> component_items;  // active items handed to each part
  std::vector<IndexSet> item_components;  // item-graph components (item-cluster variant)
};

struct BlatticeResult {
  RunResult run;
  std::vector<PhaseRecord> phases;
};

/// p = c·σ²·μ³·log(d1) / (Δ²·d2) with d1, d2 the larger and smaller side of the group.
inline double sampling_prob(std::size_t n_users, std::size_t n_items, double delta_next, double sigma, double mu,
                            double c) {
  if (n_users == 0 || n_items == 0) throw ConfigError("sampling_prob needs a nonempty group");
  if (!(delta_next > 0.0)) throw ConfigError("sampling_prob needs a positive gap");
  const double d1 = static_cast<double>(std::max(n_users, n_items));
  const double d2 = static_cast<double>(std::min(n_users, n_items));
  return c * sigma * sigma * mu * mu * mu * std::log(d1) / (delta_next * delta_next * d2);
}

/// Smallest p at which a rank-r completion problem of this shape is informative: c·r·log(d1)/d2.
inline double sampling_floor(std::size_t n_users, std::size_t n_items, std::size_t rank, double c) {
  const double d1 = static_cast<double>(std::max(n_users, n_items));
  const double d2 = static_cast<double>(std::min(n_users, n_items));
  return c * static_cast<double>(rank) * std::log(std::max(d1, 2.0)) / d2;
}

/// Rank of the last golden item still owed: ⌈T/B⌉ − ⌊t_exploit/B⌋ (0 when none is left).
inline std::size_t golden_rank(std::size_t horizon, std::size_t budget, std::size_t t_exploit) {
  const std::size_t total = golden_count(horizon, budget);
  const std::size_t used = t_exploit / budget;
  return used >= total ? 0 : total - used;
}

struct UserPart {
  IndexSet users;
  IndexSet items;
};

/// Splits `users` into connected components of the graph with an edge wherever two
/// estimated rows agree within 2Δ on every item, and gives each part the union of
/// its members' good sets T_u = {j : P̃_u(rank-th best) − P̃_uj ≤ 2Δ}.
inline std::vector<UserPart> cluster_users(const IndexSet& users, const IndexSet& items, const Matrix& est,
                                           double delta_next, std::size_t rank) {
  const double tol = 2.0 * delta_next;
  auto comps = connected_components(users.size(), [&](std::size_t a, std::size_t b) {
    const auto ua = static_cast<Eigen::Index>(users[a]);
    const auto ub = static_cast<Eigen::Index>(users[b]);
    for (std::size_t j : items)
      if (std::abs(est(ua, static_cast<Eigen::Index>(j)) - est(ub, static_cast<Eigen::Index>(j))) > tol) return false;
    return true;
  });
  std::vector<UserPart> out;
  std::vector<double> row(items.size());
  for (const auto& comp : comps) {
    UserPart part;
    std::vector<bool> keep(items.size(), false);
    for (std::size_t a : comp) {
      const std::size_t u = users[a];
      part.users.push_back(u);
      if (items.empty()) continue;
      for (std::size_t i = 0; i < items.size(); ++i)
        row[i] = est(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(items[i]));
      const double pivot = kth_largest(row, rank);
      for (std::size_t i = 0; i < items.size(); ++i)
        if (pivot - row[i] <= tol) keep[i] = true;
    }
    for (std::size_t i = 0; i < items.size(); ++i)
      if (keep[i]) part.items.push_back(items[i]);
    out.push_back(std::move(part));
  }
  return out;
}

/// Items of `universe` whose item-graph component (edge: columns within `tol` on
/// every user of `users`) meets `seed`. Also returns the components themselves.
inline IndexSet item_closure(const IndexSet& universe, const IndexSet& seed, const IndexSet& users, const Matrix& est,
                             double tol, std::vector<IndexSet>* components = nullptr) {
  auto comps = connected_components(universe.size(), [&](std::size_t a, std::size_t b) {
    const auto ja = static_cast<Eigen::Index>(universe[a]);
    const auto jb = static_cast<Eigen::Index>(universe[b]);
    for (std::size_t u : users)
      if (std::abs(est(static_cast<Eigen::Index>(u), ja) - est(static_cast<Eigen::Index>(u), jb)) > tol) return false;
    return true;
  });
  std::unordered_set<std::size_t> in_seed(seed.begin(), seed.end());
  IndexSet out;
  for (const auto& comp : comps) {
    IndexSet members;
    bool hit = false;
    for (std::size_t a : comp) {
      members.push_back(universe[a]);
      hit = hit || in_seed.count(universe[a]) > 0;
    }
    if (hit) out.insert(out.end(), members.begin(), members.end());
    if (components) components->push_back(std::move(members));
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

struct Group {
  IndexSet users;
  IndexSet items;
  std::size_t phase = 1;
  std::size_t t_exploit = 0;
};

/// Settings that turn the B-LATTICE engine into its item-cluster variant.
struct ItemClusterMode {
  bool enabled = false;
  std::size_t item_clusters = 0;  // C′
};

struct Resolved {
  std::size_t C = 1;
  double sigma = 0.0;
  double sigma_completion = 0.0;
  double p_max = 0.0;
  double mu = 1.0;
  double eps1 = 0.0;
};

inline Resolved resolve(const Instance& inst, const BlatticeHyper& h) {
  Resolved r;
  r.C = h.clusters > 0 ? h.clusters : inst.clusters;
  r.sigma = h.sigma ? *h.sigma : inst.noise.sigma;
  r.p_max = h.p_max ? *h.p_max : inst.p_max();
  if (!(r.p_max > 0.0)) r.p_max = 1.0;
  r.mu = h.mu ? *h.mu : diagnostics(inst.P, inst.cluster_of, inst.clusters).mu();
  r.eps1 = h.eps1 ? *h.eps1 : r.p_max;
  r.sigma_completion = std::max(r.sigma, h.sigma_floor * r.p_max);
  if (r.sigma < 0.0 || !(r.eps1 > 0.0) || !(r.mu > 0.0) || h.c <= 0.0 || h.p_floor_c < 0.0)
    throw ConfigError("invalid B-LATTICE hyperparameters");
  return r;
}

/// Filler for an explore round: unblocked active item outside the user's mask,
/// least used first, then highest estimate, random among exact ties.
inline std::size_t pick_filler(const Simulation& sim, std::size_t u, const IndexSet& items,
                               const std::vector<char>& in_mask, const Matrix& est, Rng& rng) {
  const auto ui = static_cast<Eigen::Index>(u);
  std::optional<std::size_t> best;
  std::uint32_t best_count = 0;
  double best_est = 0.0;
  std::size_t ties = 0;
  auto consider = [&](std::size_t j) {
    const std::uint32_t cnt = sim.ledger().total(u, j);
    const double e = est(ui, static_cast<Eigen::Index>(j));
    if (!best || cnt < best_count || (cnt == best_count && e > best_est)) {
      best = j;
      best_count = cnt;
      best_est = e;
      ties = 1;
    } else if (cnt == best_count && e == best_est) {
      if (std::uniform_int_distribution<std::size_t>(0, ties++)(rng) == 0) best = j;
    }
  };
  for (std::size_t j : items)
    if (!in_mask[j] && !sim.blocked(u, j)) consider(j);
  if (best) return *best;
  for (std::size_t j : items)
    if (!sim.blocked(u, j)) consider(j);
  if (best) return *best;
  return best_unblocked_global(sim, u, [&](std::size_t j) { return est(ui, static_cast<Eigen::Index>(j)); });
}

/// Exploit component. Returns rounds spent; prunes g.items and advances g.t_exploit.
inline std::size_t exploit(Simulation& sim, Group& g, Matrix& est, double delta, double delta_next,
                           double gap_factor, const ItemClusterMode& icm, double item_tol) {
  const Instance& inst = sim.instance();
  const std::size_t B = inst.budget;
  std::size_t spent = 0;
  std::vector<double> row;
  while (!g.items.empty() && sim.remaining(g.users.front()) > 0) {
    const std::size_t k = golden_rank(inst.horizon, B, g.t_exploit);
    if (k == 0) break;
    bool fire = false;
    std::vector<double> top(g.users.size());
    for (std::size_t a = 0; a < g.users.size(); ++a) {
      const auto u = static_cast<Eigen::Index>(g.users[a]);
      row.resize(g.items.size());
      for (std::size_t i = 0; i < g.items.size(); ++i) row[i] = est(u, static_cast<Eigen::Index>(g.items[i]));
      top[a] = *std::max_element(row.begin(), row.end());
      if (top[a] - kth_largest(row, k) >= gap_factor * delta) fire = true;
    }
    if (!fire) break;

    IndexSet S;
    for (std::size_t j : g.items) {
      for (std::size_t a = 0; a < g.users.size(); ++a)
        if (est(static_cast<Eigen::Index>(g.users[a]), static_cast<Eigen::Index>(j)) >= top[a] - 2.0 * delta_next) {
          S.push_back(j);
          break;
        }
    }
    if (icm.enabled) S = item_closure(g.items, S, g.users, est, item_tol);
    auto mean_est = [&](std::size_t j) {
      double s = 0.0;
      for (std::size_t u : g.users) s += est(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j));
      return s;
    };
    std::stable_sort(S.begin(), S.end(), [&](std::size_t a, std::size_t b) { return mean_est(a) > mean_est(b); });

    const std::size_t rounds = std::min(S.size() * B, sim.remaining(g.users.front()));
    for (std::size_t r = 0; r < rounds; ++r) {
      const std::size_t x = S[r / B];
      for (std::size_t u : g.users) {
        if (!sim.blocked(u, x)) {
          sim.recommend(u, x, Purpose::kExploit);
          continue;
        }
        const auto ui = static_cast<Eigen::Index>(u);
        auto score = [&](std::size_t j) { return est(ui, static_cast<Eigen::Index>(j)); };
        std::optional<std::size_t> y = best_unblocked(sim, u, S, score);
        if (!y) y = best_unblocked(sim, u, g.items, score);
        if (!y) y = best_unblocked_global(sim, u, score);
        sim.recommend(u, *y, Purpose::kExploit);
      }
    }
    std::unordered_set<std::size_t> gone(S.begin(), S.end());
    g.items.erase(std::remove_if(g.items.begin(), g.items.end(), [&](std::size_t j) { return gone.count(j) > 0; }),
                  g.items.end());
    spent += rounds;
    g.t_exploit += rounds;
  }
  return spent;
}

/// Explore component: Bernoulli(p) mask, one masked item per round with fillers
/// padding every user to m rounds, then a completion estimate over the group.
inline void explore(Simulation& sim, const Group& g, double p, Matrix& est, double sigma_completion, std::size_t C,
                    const SolverConfig& solver, Rng& rng, PhaseRecord& rec) {
  const Instance& inst = sim.instance();
  std::bernoulli_distribution coin(p);
  std::vector<IndexSet> mask(g.users.size());
  std::size_t m = 0;
  for (std::size_t a = 0; a < g.users.size(); ++a) {
    for (std::size_t j : g.items)
      if (coin(rng)) mask[a].push_back(j);
    std::shuffle(mask[a].begin(), mask[a].end(), rng);
    m = std::max(m, mask[a].size());
  }
  const std::size_t rounds = std::min(m, sim.remaining(g.users.front()));
  const std::size_t call = sim.begin_estimate();
  std::vector<Sample> samples;
  std::vector<char> in_mask(inst.items, 0);
  for (std::size_t a = 0; a < g.users.size(); ++a) {
    const std::size_t u = g.users[a];
    for (std::size_t j : mask[a]) in_mask[j] = 1;
    for (std::size_t r = 0; r < rounds; ++r) {
      if (r < mask[a].size()) {
        const std::size_t z = mask[a][r];
        if (!sim.blocked(u, z)) {
          const std::size_t t = sim.round_of(u);
          samples.push_back({u, z, sim.recommend(u, z, Purpose::kExplore)});
          sim.log_consumption(call, u, z, t, false);
          continue;
        }
        if (auto obs = sim.ledger().reuse(u, z)) {
          samples.push_back({u, z, obs->value});
          sim.log_consumption(call, u, z, obs->round, true);
        } else {
          ++rec.dropped;
        }
      }
      sim.recommend(u, pick_filler(sim, u, g.items, in_mask, est, rng), Purpose::kFiller);
    }
    for (std::size_t j : mask[a]) in_mask[j] = 0;
  }
  rec.explore_rounds = rounds;
  rec.observations = samples.size();
  if (samples.empty()) return;
  const EstimateResult res = estimate(g.users, g.items, sigma_completion, C, samples, solver, rng);
  for (std::size_t a = 0; a < g.users.size(); ++a)
    for (std::size_t i = 0; i < g.items.size(); ++i)
      est(static_cast<Eigen::Index>(g.users[a]), static_cast<Eigen::Index>(g.items[i])) =
          res.estimate(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i));
}

/// Few-items / end-game branch: best-estimated unblocked active item every round.
inline void finish_group(Simulation& sim, const Group& g, const Matrix& est) {
  for (std::size_t u : g.users) {
    const auto ui = static_cast<Eigen::Index>(u);
    auto score = [&](std::size_t j) { return est(ui, static_cast<Eigen::Index>(j)); };
    while (sim.remaining(u) > 0) {
      std::optional<std::size_t> j = best_unblocked(sim, u, g.items, score);
      sim.recommend(u, j ? *j : best_unblocked_global(sim, u, score), Purpose::kEdge);
    }
  }
}

/// Phase recursion as a FIFO work queue of groups.
inline std::vector<PhaseRecord> run_phases(Simulation& sim, const BlatticeHyper& hyper, const ItemClusterMode& icm,
                                           Rng& rng) {
  const Instance& inst = sim.instance();
  const Resolved R = resolve(inst, hyper);
  const double C = static_cast<double>(R.C);
  const double gap_factor = 64.0 * (icm.enabled ? C + static_cast<double>(icm.item_clusters) : C);
  const double t_cube_root = std::cbrt(static_cast<double>(inst.horizon));
  Matrix est = Matrix::Zero(static_cast<Eigen::Index>(inst.users), static_cast<Eigen::Index>(inst.items));
  std::vector<PhaseRecord> log;

  std::deque<Group> queue;
  queue.push_back({all_indices(inst.users), all_indices(inst.items), 1, 0});
  while (!queue.empty()) {
    Group g = std::move(queue.front());
    queue.pop_front();
    if (g.users.empty() || sim.remaining(g.users.front()) == 0) continue;

    PhaseRecord rec;
    rec.phase = g.phase;
    rec.start_round = sim.round_of(g.users.front());
    rec.users = g.users;
    rec.items_before = g.items.size();
    const double eps = R.eps1 / std::ldexp(1.0, static_cast<int>(g.phase) - 1);
    rec.delta = g.phase > 1 ? eps / (88.0 * C) : R.p_max;
    rec.delta_next = eps / 2.0 / (88.0 * C);
    const double item_tol = 16.0 * C * rec.delta_next;

    rec.exploit_rounds = exploit(sim, g, est, rec.delta, rec.delta_next, gap_factor, icm, item_tol);
    rec.items_after_exploit = g.items.size();
    if (sim.remaining(g.users.front()) == 0) {
      log.push_back(std::move(rec));
      continue;
    }

    const bool enough_items = static_cast<double>(g.items.size()) >= t_cube_root && !g.items.empty();
    if (enough_items) {
      rec.p = std::max(sampling_prob(g.users.size(), g.items.size(), rec.delta_next, R.sigma, R.mu, hyper.c),
                       sampling_floor(g.users.size(), g.items.size(), R.C, hyper.p_floor_c));
    }
    if (!enough_items || rec.p >= 1.0 || g.phase >= hyper.max_phases) {
      finish_group(sim, g, est);
      log.push_back(std::move(rec));
      continue;
    }

    rec.explored = true;
    explore(sim, g, rec.p, est, R.sigma_completion, R.C, hyper.solver, rng, rec);
    if (rec.explore_rounds == 0) {
      finish_group(sim, g, est);
      log.push_back(std::move(rec));
      continue;
    }

    const std::size_t rank = std::max<std::size_t>(1, golden_rank(inst.horizon, inst.budget, g.t_exploit));
    std::vector<UserPart> parts = cluster_users(g.users, g.items, est, rec.delta_next, rank);
    for (UserPart& part : parts) {
      if (icm.enabled) {
        std::vector<IndexSet> comps;
        part.items = item_closure(g.items, part.items, part.users, est, item_tol, &comps);
        if (rec.item_components.empty()) rec.item_components = std::move(comps);
      }
      rec.components.push_back(part.users);
      rec.component_items.push_back(part.items);
      queue.push_back({std::move(part.users), std::move(part.items), g.phase + 1, g.t_exploit});
    }
    log.push_back(std::move(rec));
  }
  return log;
}

}  // namespace detail

/// Runs B-LATTICE on an existing simulation (ledger, noise) with decisions drawn from `rng`.
inline std::vector<PhaseRecord> run_blattice(Simulation& sim, const BlatticeHyper& hyper, Rng& rng) {
  return detail::run_phases(sim, hyper, {}, rng);
}

inline BlatticeResult run_blattice(const Instance& inst, const BlatticeHyper& hyper, std::uint64_t seed) {
  Simulation sim(inst, noise_seed_for(seed));
  Rng rng = make_stream(seed, "blattice");
  BlatticeResult out;
  out.phases = run_blattice(sim, hyper, rng);
  out.run = collect(sim, "blattice");
  return out;
}

}  // namespace bbandit
