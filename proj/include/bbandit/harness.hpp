#pragma once

// Regret accounting, experiment sweeps and aggregation over seeds.

#include "bbandit/baselines.hpp"
#include "bbandit/bbuic.hpp"
#include "bbandit/blattice.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace bbandit {

// ---------------------------------------------------------------------------
// Regret

/// Per user, the best achievable mean reward of the first t rounds for t = 1..T:
/// golden items best first, each repeated B times.
inline Matrix oracle_prefix_values(const Instance& inst) {
  const Matrix mean = mean_reward_matrix(inst);
  Matrix out(static_cast<Eigen::Index>(inst.users), static_cast<Eigen::Index>(inst.horizon));
  std::vector<double> row(inst.items);
  for (std::size_t u = 0; u < inst.users; ++u) {
    for (std::size_t j = 0; j < inst.items; ++j) row[j] = mean(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j));
    std::sort(row.begin(), row.end(), std::greater<>());
    double acc = 0.0;
    for (std::size_t t = 0; t < inst.horizon; ++t) {
      acc += row[t / inst.budget];
      out(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(t)) = acc;
    }
  }
  return out;
}

inline void check_trace(const RegretTrace& trace, const Instance& inst) {
  if (trace.users != inst.users || trace.horizon != inst.horizon || trace.rounds.size() != inst.horizon)
    throw ProtocolError("trace does not cover every round of the instance");
  for (const RoundLog& r : trace.rounds) {
    if (r.items.size() != inst.users) throw ProtocolError("trace round is missing users");
    for (std::size_t j : r.items)
      if (j >= inst.items) throw ProtocolError("trace holds an unset or invalid item");
  }
}

/// Expected reward of the chosen items averaged over users, per round.
inline std::vector<double> roundwise_mean_reward(const RegretTrace& trace, const Instance& inst) {
  check_trace(trace, inst);
  const Matrix mean = mean_reward_matrix(inst);
  std::vector<double> out(inst.horizon, 0.0);
  for (std::size_t t = 0; t < inst.horizon; ++t) {
    double s = 0.0;
    for (std::size_t u = 0; u < inst.users; ++u)
      s += mean(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(trace.rounds[t].items[u]));
    out[t] = s / static_cast<double>(inst.users);
  }
  return out;
}

/// Regret after t = 1..T rounds against the best t-round prefix of the oracle.
/// The last entry is the regret of the whole run.
inline std::vector<double> cumulative_regret(const RegretTrace& trace, const Instance& inst) {
  const std::vector<double> reward = roundwise_mean_reward(trace, inst);
  const Matrix oracle = oracle_prefix_values(inst);
  std::vector<double> out(inst.horizon);
  double got = 0.0;
  for (std::size_t t = 0; t < inst.horizon; ++t) {
    got += reward[t];
    out[t] = oracle.col(static_cast<Eigen::Index>(t)).mean() - got;
  }
  return out;
}

/// (1/M)·Σ_u [oracle value over T rounds − Σ_t mean reward of ρ_u(t)].
inline double regret(const RegretTrace& trace, const Instance& inst) {
  return cumulative_regret(trace, inst).back();
}

// ---------------------------------------------------------------------------
// Algorithms by name

enum class AlgorithmKind { kBlattice, kBbuic, kEtc, kPbLattice, kGreedy, kOracle, kRandom };

inline AlgorithmKind parse_algorithm_kind(const std::string& s) {
  if (s == "blattice") return AlgorithmKind::kBlattice;
  if (s == "bbuic") return AlgorithmKind::kBbuic;
  if (s == "etc") return AlgorithmKind::kEtc;
  if (s == "pblattice") return AlgorithmKind::kPbLattice;
  if (s == "greedy") return AlgorithmKind::kGreedy;
  if (s == "oracle") return AlgorithmKind::kOracle;
  if (s == "random") return AlgorithmKind::kRandom;
  throw ConfigError("unknown algorithm '" + s + "'");
}

inline const char* to_string(AlgorithmKind k) {
  switch (k) {
    case AlgorithmKind::kBlattice: return "blattice";
    case AlgorithmKind::kBbuic: return "bbuic";
    case AlgorithmKind::kEtc: return "etc";
    case AlgorithmKind::kPbLattice: return "pblattice";
    case AlgorithmKind::kGreedy: return "greedy";
    case AlgorithmKind::kOracle: return "oracle";
    case AlgorithmKind::kRandom: return "random";
  }
  return "?";
}

struct AlgorithmSpec {
  /// Label used in outputs; defaults to the kind.
  std::string label;
  AlgorithmKind kind = AlgorithmKind::kRandom;
  BlatticeHyper blattice{};
  BbuicHyper bbuic{};
  EtcConfig etc{};
  PbLatticeConfig pblattice{};
  GreedyConfig greedy{};

  static AlgorithmSpec of(AlgorithmKind kind, std::string label = {}) {
    AlgorithmSpec a;
    a.kind = kind;
    a.label = label.empty() ? to_string(kind) : std::move(label);
    return a;
  }
  static AlgorithmSpec etc_rounds(std::size_t m) {
    AlgorithmSpec a = of(AlgorithmKind::kEtc, "etc" + std::to_string(m));
    a.etc.explore_rounds = m;
    return a;
  }
};

inline RunResult run_algorithm(const Instance& inst, const AlgorithmSpec& alg, std::uint64_t seed) {
  RunResult r;
  switch (alg.kind) {
    case AlgorithmKind::kBlattice: r = run_blattice(inst, alg.blattice, seed).run; break;
    case AlgorithmKind::kBbuic: r = run_bbuic(inst, alg.bbuic, seed).run; break;
    case AlgorithmKind::kEtc: r = run_etc(inst, alg.etc, seed); break;
    case AlgorithmKind::kPbLattice: r = run_pblattice(inst, alg.pblattice, seed); break;
    case AlgorithmKind::kGreedy: r = run_collab_greedy(inst, alg.greedy, seed); break;
    case AlgorithmKind::kOracle: r = run_oracle(inst, seed); break;
    case AlgorithmKind::kRandom: r = run_random(inst, seed); break;
  }
  r.algorithm = alg.label;
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
  std::vector<GeneratorSpec> datasets;
  std::vector<AlgorithmSpec> algorithms;
  std::vector<std::uint64_t> seeds;
  /// Horizons to run every dataset at; empty keeps each dataset's own T.
  std::vector<std::size_t> horizons;
  std::size_t threads = 1;

  void validate() const {
    if (datasets.empty() || algorithms.empty() || seeds.empty()) throw ConfigError("sweep grid is empty");
    for (std::size_t h : horizons)
      if (h == 0) throw ConfigError("horizon must be positive");
  }
};

struct CellResult {
  std::string dataset;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::size_t horizon = 0;
  bool ok = false;
  std::string error;
  double regret = 0.0;
  std::vector<double> cumulative;
  std::vector<double> roundwise;
  std::uint32_t max_count = 0;
  std::size_t budget = 1;
};

inline std::string dataset_label(const GeneratorSpec& spec, bool with_horizon) {
  return with_horizon ? spec.name + "-T" + std::to_string(spec.horizon) : spec.name;
}

/// Runs every (dataset, horizon, algorithm, seed) cell. All algorithms at the same
/// seed see the same instance and the same reward noise. A throwing cell is
/// recorded as failed and the sweep goes on. Output order does not depend on
/// the thread count.
inline std::vector<CellResult> sweep(const SweepSpec& spec) {
  spec.validate();
  struct Job {
    GeneratorSpec data;
    std::size_t alg;
    std::uint64_t seed;
    std::string label;
  };
  std::vector<Job> jobs;
  const bool grid = !spec.horizons.empty();
  for (const GeneratorSpec& d : spec.datasets) {
    std::vector<GeneratorSpec> variants;
    if (!grid) {
      variants.push_back(d);
    } else {
      for (std::size_t h : spec.horizons) {
        GeneratorSpec v = d;
        v.horizon = h;
        variants.push_back(v);
      }
    }
    for (const GeneratorSpec& v : variants)
      for (std::size_t a = 0; a < spec.algorithms.size(); ++a)
        for (std::uint64_t s : spec.seeds) jobs.push_back({v, a, s, dataset_label(v, grid)});
  }

  std::vector<CellResult> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      CellResult& cell = out[i];
      cell.dataset = job.label;
      cell.algorithm = spec.algorithms[job.alg].label;
      cell.seed = job.seed;
      cell.horizon = job.data.horizon;
      cell.budget = job.data.budget;
      try {
        const Instance inst = generate_instance(job.data, job.seed);
        const RunResult run = run_algorithm(inst, spec.algorithms[job.alg], job.seed);
        cell.cumulative = cumulative_regret(run.trace, inst);
        cell.roundwise = roundwise_mean_reward(run.trace, inst);
        cell.regret = cell.cumulative.back();
        cell.max_count = run.max_count;
        if (run.max_count > inst.budget || !run.ledger_ok) throw BudgetViolation("ledger invariant broken");
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(spec.threads, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return out;
}

struct Summary {
  std::string dataset;
  std::string algorithm;
  std::size_t horizon = 0;
  std::size_t runs = 0;
  std::size_t failures = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Final regret per (dataset, algorithm): mean, standard error, min and max over seeds.
inline std::vector<Summary> aggregate(const std::vector<CellResult>& cells) {
  std::vector<Summary> out;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  std::vector<std::vector<double>> values;
  for (const CellResult& c : cells) {
    auto key = std::make_pair(c.dataset, c.algorithm);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, out.size()).first;
      Summary s;
      s.dataset = c.dataset;
      s.algorithm = c.algorithm;
      s.horizon = c.horizon;
      out.push_back(s);
      values.emplace_back();
    }
    if (c.ok)
      values[it->second].push_back(c.regret);
    else
      ++out[it->second].failures;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& v = values[i];
    Summary& s = out[i];
    s.runs = v.size();
    if (v.empty()) continue;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    s.min = *lo;
    s.max = *hi;
  }
  return out;
}

inline const char* kCsvHeader = "dataset,algorithm,seed,t,roundwise_mean_reward,cumulative_regret";

inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

/// One row per successful cell and round t = 1..T.
inline void write_csv(std::ostream& os, const std::vector<CellResult>& cells) {
  os << kCsvHeader << '\n';
  for (const CellResult& c : cells) {
    if (!c.ok) continue;
    for (std::size_t t = 0; t < c.cumulative.size(); ++t)
      os << c.dataset << ',' << c.algorithm << ',' << c.seed << ',' << (t + 1) << ',' << format_real(c.roundwise[t])
         << ',' << format_real(c.cumulative[t]) << '\n';
  }
}

inline nlohmann::json summary_json(const std::vector<CellResult>& cells) {
  nlohmann::json j;
  auto rows = nlohmann::json::array();
  for (const Summary& s : aggregate(cells))
    rows.push_back({{"dataset", s.dataset},
                    {"algorithm", s.algorithm},
                    {"T", s.horizon},
                    {"runs", s.runs},
                    {"failures", s.failures},
                    {"regret_mean", s.mean},
                    {"regret_stderr", s.stderr_},
                    {"regret_min", s.min},
                    {"regret_max", s.max}});
  j["cells"] = std::move(rows);
  auto failed = nlohmann::json::array();
  for (const CellResult& c : cells)
    if (!c.ok) failed.push_back({{"dataset", c.dataset}, {"algorithm", c.algorithm}, {"seed", c.seed}, {"error", c.error}});
  j["failed"] = std::move(failed);
  return j;
}

}  // namespace bbandit
