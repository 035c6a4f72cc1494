#pragma once

// Synthetic blocked-bandit environments: instance generation, the reward model,
// the per-(user,item) budget ledger and the round-by-round simulation runner.

#include "bbandit/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bbandit {

enum class NoiseKind { kGaussian, kSignBernoulli };

struct NoiseModel {
  NoiseKind kind = NoiseKind::kGaussian;
  /// Gaussian: standard deviation. SignBernoulli: variance proxy of the ±1 draw (1).
  double sigma = 0.5;

  static NoiseModel gaussian(double sigma) { return {NoiseKind::kGaussian, sigma}; }
  static NoiseModel sign_bernoulli() { return {NoiseKind::kSignBernoulli, 1.0}; }
};

/// Distribution of the entries of the latent item-factor matrix V (P = U Vᵀ).
enum class EntryLaw {
  kNormal,       // Normal(a, b) with b the variance
  kUniform,      // Uniform(a, b)
  kDiscreteGrid  // equiprobable over {0.05, 0.15, ..., 0.95}
};

struct EntryLawSpec {
  EntryLaw law = EntryLaw::kUniform;
  double a = 0.0;
  double b = 5.0;
};

struct GeneratorSpec {
  std::string name = "custom";
  std::size_t users = 150;
  std::size_t items = 150;
  std::size_t clusters = 4;
  std::size_t horizon = 60;
  std::size_t budget = 1;
  EntryLawSpec entries{};
  NoiseModel noise{};
  /// Number of item clusters; 0 means items carry no cluster structure.
  std::size_t item_clusters = 0;

  static GeneratorSpec d1(double scale = 1.0) {
    GeneratorSpec s = scaled("d1", scale);
    s.entries = {EntryLaw::kNormal, 0.0, 25.0};
    s.noise = NoiseModel::gaussian(0.5);
    return s;
  }
  static GeneratorSpec d2(double scale = 1.0) {
    GeneratorSpec s = scaled("d2", scale);
    s.entries = {EntryLaw::kUniform, 0.0, 5.0};
    s.noise = NoiseModel::gaussian(0.5);
    return s;
  }
  static GeneratorSpec d3(double scale = 1.0) {
    GeneratorSpec s = scaled("d3", scale);
    s.entries = {EntryLaw::kDiscreteGrid, 0.05, 0.95};
    s.noise = NoiseModel::sign_bernoulli();
    return s;
  }
  /// Throws ConfigError when no instance can be drawn from this spec.
  void validate() const {
    if (users == 0 || items == 0 || horizon == 0 || budget == 0 || clusters == 0)
      throw ConfigError("generator dimensions must be positive");
    if (clusters > users) throw ConfigError("C > M");
    if (items * budget < horizon) throw ConfigError("N*B < T");
    if (item_clusters > items) throw ConfigError("more item clusters than items");
    if (entries.law == EntryLaw::kUniform && !(entries.a < entries.b))
      throw ConfigError("uniform entry law needs a < b");
    if (entries.law == EntryLaw::kNormal && entries.b < 0.0)
      throw ConfigError("normal entry law needs a nonnegative variance");
  }

  /// "d1" / "d2" / "d3" at the given scale of the 150×150, T = 60 setup.
  static GeneratorSpec named(const std::string& name, double scale = 1.0) {
    if (name == "d1") return d1(scale);
    if (name == "d2") return d2(scale);
    if (name == "d3") return d3(scale);
    throw ConfigError("unknown dataset '" + name + "' (expected d1, d2 or d3)");
  }

 private:
  static GeneratorSpec scaled(std::string name, double scale) {
    if (!(scale > 0.0)) throw ConfigError("dataset scale must be positive");
    GeneratorSpec s;
    s.name = std::move(name);
    s.users = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(150.0 * scale)));
    s.items = s.users;
    s.horizon = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(60.0 * scale)));
    s.clusters = std::min<std::size_t>(4, s.users);
    s.budget = 1;
    return s;
  }
};

struct Instance {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t horizon = 0;
  std::size_t budget = 1;
  std::size_t clusters = 1;
  IndexSet cluster_of;
  /// Empty unless the instance has item clusters.
  IndexSet item_cluster_of;
  std::size_t item_clusters = 0;
  Matrix P;
  NoiseModel noise{};

  double p_max() const { return P.size() == 0 ? 0.0 : P.cwiseAbs().maxCoeff(); }

  /// Throws ConfigError when any structural invariant fails.
  void validate() const {
    if (users == 0 || items == 0 || horizon == 0 || budget == 0 || clusters == 0)
      throw ConfigError("instance dimensions must be positive");
    if (clusters > users) throw ConfigError("more clusters than users");
    if (items * budget < horizon) throw ConfigError("infeasible instance: N*B < T");
    if (static_cast<std::size_t>(P.rows()) != users || static_cast<std::size_t>(P.cols()) != items)
      throw ConfigError("reward matrix has wrong shape");
    if (cluster_of.size() != users) throw ConfigError("cluster_of must list every user");
    std::vector<bool> seen(clusters, false);
    for (std::size_t c : cluster_of) {
      if (c >= clusters) throw ConfigError("cluster id out of range");
      seen[c] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw ConfigError("cluster_of is not surjective");
    if (!item_cluster_of.empty()) {
      if (item_cluster_of.size() != items) throw ConfigError("item_cluster_of must list every item");
      for (std::size_t c : item_cluster_of)
        if (c >= item_clusters) throw ConfigError("item cluster id out of range");
    }
    if (noise.kind == NoiseKind::kSignBernoulli && (P.minCoeff() < 0.0 || P.maxCoeff() > 1.0))
      throw ConfigError("sign-Bernoulli instances need P in [0, 1]");
    if (noise.sigma < 0.0) throw ConfigError("noise scale must be nonnegative");
  }
};

namespace detail {

inline double draw_entry(const EntryLawSpec& law, Rng& rng) {
  switch (law.law) {
    case EntryLaw::kNormal:
      return std::normal_distribution<double>(law.a, std::sqrt(law.b))(rng);
    case EntryLaw::kUniform:
      return std::uniform_real_distribution<double>(law.a, law.b)(rng);
    case EntryLaw::kDiscreteGrid:
      return 0.05 + 0.1 * static_cast<double>(std::uniform_int_distribution<int>(0, 9)(rng));
  }
  return 0.0;
}

}  // namespace detail

/// P = U Vᵀ with one-hot U (user i in cluster i mod C). With item clusters,
/// V is itself blocky: V_j = Q_{·, j mod C'} for a C×C' core Q.
inline Instance generate_instance(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();

  Rng rng = make_stream(seed, "instance");
  Instance inst;
  inst.users = spec.users;
  inst.items = spec.items;
  inst.horizon = spec.horizon;
  inst.budget = spec.budget;
  inst.clusters = spec.clusters;
  inst.noise = spec.noise;
  inst.cluster_of.resize(spec.users);
  for (std::size_t i = 0; i < spec.users; ++i) inst.cluster_of[i] = i % spec.clusters;

  Matrix V(spec.items, spec.clusters);
  if (spec.item_clusters > 0) {
    inst.item_clusters = spec.item_clusters;
    inst.item_cluster_of.resize(spec.items);
    Matrix Q(spec.clusters, spec.item_clusters);
    for (Eigen::Index a = 0; a < Q.rows(); ++a)
      for (Eigen::Index b = 0; b < Q.cols(); ++b) Q(a, b) = detail::draw_entry(spec.entries, rng);
    for (std::size_t j = 0; j < spec.items; ++j) {
      inst.item_cluster_of[j] = j % spec.item_clusters;
      V.row(static_cast<Eigen::Index>(j)) = Q.col(static_cast<Eigen::Index>(inst.item_cluster_of[j])).transpose();
    }
  } else {
    for (Eigen::Index j = 0; j < V.rows(); ++j)
      for (Eigen::Index c = 0; c < V.cols(); ++c) V(j, c) = detail::draw_entry(spec.entries, rng);
  }
  inst.P.resize(spec.users, spec.items);
  for (std::size_t i = 0; i < spec.users; ++i)
    inst.P.row(static_cast<Eigen::Index>(i)) = V.col(static_cast<Eigen::Index>(inst.cluster_of[i])).transpose();
  inst.validate();
  return inst;
}

/// The mean of the observation process: P for Gaussian noise, 2P − 1 for ±1 draws.
/// Regret and oracle schedules are computed against this matrix.
inline Matrix mean_reward_matrix(const Instance& inst) {
  if (inst.noise.kind == NoiseKind::kSignBernoulli) return (2.0 * inst.P.array() - 1.0).matrix();
  return inst.P;
}

inline double sample_reward(const Instance& inst, std::size_t u, std::size_t j, Rng& rng) {
  const double p = inst.P(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j));
  if (inst.noise.kind == NoiseKind::kSignBernoulli)
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p ? 1.0 : -1.0;
  if (inst.noise.sigma == 0.0) return p;
  return p + std::normal_distribution<double>(0.0, inst.noise.sigma)(rng);
}

// ---------------------------------------------------------------------------
// JSON fixtures: {M, N, T, B, C, cluster_of, P, noise[, item_cluster_of, C_items]}

inline nlohmann::json instance_to_json(const Instance& inst) {
  nlohmann::json j;
  j["M"] = inst.users;
  j["N"] = inst.items;
  j["T"] = inst.horizon;
  j["B"] = inst.budget;
  j["C"] = inst.clusters;
  j["cluster_of"] = inst.cluster_of;
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < inst.P.rows(); ++i) {
    std::vector<double> row(inst.P.cols());
    for (Eigen::Index c = 0; c < inst.P.cols(); ++c) row[c] = inst.P(i, c);
    rows.push_back(std::move(row));
  }
  j["P"] = std::move(rows);
  j["noise"] = {{"kind", inst.noise.kind == NoiseKind::kGaussian ? "gaussian" : "sign_bernoulli"},
                {"sigma", inst.noise.sigma}};
  if (!inst.item_cluster_of.empty()) {
    j["item_cluster_of"] = inst.item_cluster_of;
    j["C_items"] = inst.item_clusters;
  }
  return j;
}

inline Instance instance_from_json(const nlohmann::json& j) {
  try {
    Instance inst;
    inst.users = j.at("M").get<std::size_t>();
    inst.items = j.at("N").get<std::size_t>();
    inst.horizon = j.at("T").get<std::size_t>();
    inst.budget = j.at("B").get<std::size_t>();
    inst.clusters = j.at("C").get<std::size_t>();
    inst.cluster_of = j.at("cluster_of").get<IndexSet>();
    const auto& rows = j.at("P");
    if (rows.size() != inst.users) throw ConfigError("P must have M rows");
    inst.P.resize(static_cast<Eigen::Index>(inst.users), static_cast<Eigen::Index>(inst.items));
    for (std::size_t i = 0; i < inst.users; ++i) {
      const auto row = rows[i].get<std::vector<double>>();
      if (row.size() != inst.items) throw ConfigError("P rows must have N entries");
      for (std::size_t c = 0; c < inst.items; ++c)
        inst.P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
    }
    const auto& noise = j.at("noise");
    const auto kind = noise.at("kind").get<std::string>();
    if (kind == "gaussian")
      inst.noise.kind = NoiseKind::kGaussian;
    else if (kind == "sign_bernoulli")
      inst.noise.kind = NoiseKind::kSignBernoulli;
    else
      throw ConfigError("unknown noise kind '" + kind + "'");
    inst.noise.sigma = noise.at("sigma").get<double>();
    if (j.contains("item_cluster_of")) {
      inst.item_cluster_of = j.at("item_cluster_of").get<IndexSet>();
      inst.item_clusters = j.at("C_items").get<std::size_t>();
    }
    inst.validate();
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed instance JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Budget ledger

enum class LedgerMode {
  /// K/L bookkeeping: an observation feeds at most one estimate.
  kConsumeOnce,
  /// Binary counter with B = 1; stored observations may be reused by any estimate.
  kBinaryReuse
};

struct StoredObservation {
  std::size_t round = 0;
  double value = 0.0;
};

class BlockingLedger {
 public:
  BlockingLedger(std::size_t users, std::size_t items, std::size_t budget,
                 LedgerMode mode = LedgerMode::kConsumeOnce)
      : users_(users), items_(items), budget_(budget), mode_(mode), K_(users * items, 0), L_(users * items, 0) {
    if (mode == LedgerMode::kBinaryReuse && budget != 1)
      throw ConfigError("binary-reuse ledger requires B = 1");
  }

  std::size_t budget() const { return budget_; }
  LedgerMode mode() const { return mode_; }
  std::uint32_t consumed(std::size_t u, std::size_t j) const { return K_[key(u, j)]; }
  std::uint32_t unconsumed(std::size_t u, std::size_t j) const { return L_[key(u, j)]; }
  std::uint32_t total(std::size_t u, std::size_t j) const { return K_[key(u, j)] + L_[key(u, j)]; }
  bool blocked(std::size_t u, std::size_t j) const { return total(u, j) >= budget_; }

  /// Counts one recommendation. `consumable` observations go straight to K (they
  /// are about to feed an estimate); the rest go to L and are kept for reuse.
  void record(std::size_t u, std::size_t j, bool consumable, StoredObservation obs) {
    const std::size_t k = key(u, j);
    if (K_[k] + L_[k] >= budget_)
      throw BudgetViolation("budget exceeded for user " + std::to_string(u) + ", item " + std::to_string(j));
    if (mode_ == LedgerMode::kBinaryReuse) {
      K_[k] = 1;
      stored_[k].push_back(obs);
      return;
    }
    if (consumable) {
      ++K_[k];
    } else {
      ++L_[k];
      stored_[k].push_back(obs);
    }
  }

  /// An earlier observation of (u, j) that may still feed an estimate.
  /// Consume-once mode pops the latest unconsumed one and moves a count from L to K;
  /// binary mode hands back the stored observation and keeps it.
  std::optional<StoredObservation> reuse(std::size_t u, std::size_t j) {
    const std::size_t k = key(u, j);
    auto it = stored_.find(k);
    if (it == stored_.end() || it->second.empty()) return std::nullopt;
    if (mode_ == LedgerMode::kBinaryReuse) return it->second.front();
    StoredObservation obs = it->second.back();
    it->second.pop_back();
    if (it->second.empty()) stored_.erase(it);
    --L_[k];
    ++K_[k];
    return obs;
  }

  std::size_t pending_count(std::size_t u, std::size_t j) const {
    auto it = stored_.find(key(u, j));
    return it == stored_.end() ? 0 : it->second.size();
  }

  std::uint32_t max_total() const {
    std::uint32_t best = 0;
    for (std::size_t k = 0; k < K_.size(); ++k) best = std::max(best, K_[k] + L_[k]);
    return best;
  }

  /// K + L ≤ B everywhere, and (consume-once) stored observations match L.
  bool invariants_hold() const {
    for (std::size_t k = 0; k < K_.size(); ++k) {
      if (K_[k] + L_[k] > budget_) return false;
      if (mode_ == LedgerMode::kConsumeOnce) {
        auto it = stored_.find(k);
        const std::size_t n = it == stored_.end() ? 0 : it->second.size();
        if (n != L_[k]) return false;
      }
    }
    return true;
  }

 private:
  std::size_t key(std::size_t u, std::size_t j) const { return u * items_ + j; }

  std::size_t users_;
  std::size_t items_;
  std::size_t budget_;
  LedgerMode mode_;
  std::vector<std::uint32_t> K_;
  std::vector<std::uint32_t> L_;
  std::unordered_map<std::size_t, std::vector<StoredObservation>> stored_;
};

// ---------------------------------------------------------------------------
// Simulation protocol

enum class Purpose {
  kExplore,  // sampled-mask recommendation whose observation feeds the next estimate
  kFiller,   // padding inside an explore component
  kExploit,  // golden-item recommendation
  kEdge,     // few-items / end-game branch
  kCommit,   // greedy commitment after exploration (ETC)
  kRandom,   // random recommendation (baselines)
  kOracle
};

inline const char* to_string(Purpose p) {
  switch (p) {
    case Purpose::kExplore: return "explore";
    case Purpose::kFiller: return "filler";
    case Purpose::kExploit: return "exploit";
    case Purpose::kEdge: return "edge";
    case Purpose::kCommit: return "commit";
    case Purpose::kRandom: return "random";
    case Purpose::kOracle: return "oracle";
  }
  return "?";
}

struct Event {
  std::size_t round = 0;
  std::size_t user = 0;
  std::size_t item = 0;
  Purpose purpose = Purpose::kRandom;
  double reward = 0.0;
};

/// One observation fed to an estimate call.
struct ConsumeRecord {
  std::size_t estimate_call = 0;
  std::size_t user = 0;
  std::size_t item = 0;
  std::size_t round = 0;  // round in which the observation was made
  bool reused = false;
};

struct RoundLog {
  std::size_t round = 0;
  IndexSet items;               // ρ_u(t) per user
  std::vector<double> rewards;  // R^(t) per user
};

struct RegretTrace {
  std::size_t users = 0;
  std::size_t horizon = 0;
  std::vector<RoundLog> rounds;
};

/// Runs one policy against one instance. Every user has its own round cursor:
/// disjoint user groups may sit at different rounds, but a user's t-th
/// recommendation always lands in round t.
class Simulation {
 public:
  Simulation(const Instance& inst, std::uint64_t noise_seed, LedgerMode mode = LedgerMode::kConsumeOnce)
      : inst_(inst),
        noise_seed_(noise_seed),
        ledger_(inst.users, inst.items, inst.budget, mode),
        cursor_(inst.users, 0),
        chosen_(inst.users * inst.horizon, kUnset),
        rewards_(inst.users * inst.horizon, 0.0) {
    events_.reserve(inst.users * inst.horizon);
  }

  static constexpr std::size_t kUnset = static_cast<std::size_t>(-1);

  const Instance& instance() const { return inst_; }
  BlockingLedger& ledger() { return ledger_; }
  const BlockingLedger& ledger() const { return ledger_; }

  std::size_t round_of(std::size_t u) const { return cursor_[u]; }
  std::size_t remaining(std::size_t u) const { return inst_.horizon - cursor_[u]; }
  bool blocked(std::size_t u, std::size_t j) const { return ledger_.blocked(u, j); }

  double recommend(std::size_t u, std::size_t j, Purpose purpose) {
    if (u >= inst_.users || j >= inst_.items) throw ProtocolError("recommendation index out of range");
    const std::size_t t = cursor_[u];
    if (t >= inst_.horizon) throw ProtocolError("user " + std::to_string(u) + " is past the horizon");
    if (ledger_.blocked(u, j))
      throw BudgetViolation("item " + std::to_string(j) + " is blocked for user " + std::to_string(u) +
                            " (policy '" + to_string(purpose) + "')");
    Rng rng{splitmix64(splitmix64(splitmix64(noise_seed_ ^ u) ^ (j * 0x9e3779b97f4a7c15ULL)) + t)};
    const double r = sample_reward(inst_, u, j, rng);
    ledger_.record(u, j, purpose == Purpose::kExplore, {t, r});
    chosen_[u * inst_.horizon + t] = j;
    rewards_[u * inst_.horizon + t] = r;
    events_.push_back({t, u, j, purpose, r});
    ++cursor_[u];
    return r;
  }

  /// Opens a new estimate call; returns its id for consumption records.
  std::size_t begin_estimate() { return estimate_calls_++; }
  void log_consumption(std::size_t call, std::size_t u, std::size_t j, std::size_t round, bool reused) {
    consumption_.push_back({call, u, j, round, reused});
  }
  std::size_t estimate_calls() const { return estimate_calls_; }

  const std::vector<Event>& events() const { return events_; }
  const std::vector<ConsumeRecord>& consumption() const { return consumption_; }

  bool complete() const {
    return std::all_of(cursor_.begin(), cursor_.end(), [&](std::size_t c) { return c == inst_.horizon; });
  }

  RegretTrace trace() const {
    if (!complete()) throw ProtocolError("trace requested before every user received T recommendations");
    RegretTrace tr;
    tr.users = inst_.users;
    tr.horizon = inst_.horizon;
    tr.rounds.resize(inst_.horizon);
    for (std::size_t t = 0; t < inst_.horizon; ++t) {
      RoundLog& log = tr.rounds[t];
      log.round = t;
      log.items.resize(inst_.users);
      log.rewards.resize(inst_.users);
      for (std::size_t u = 0; u < inst_.users; ++u) {
        log.items[u] = chosen_[u * inst_.horizon + t];
        log.rewards[u] = rewards_[u * inst_.horizon + t];
      }
    }
    return tr;
  }

  /// JSON lines: recommendations ({round, user, item, purpose, reward}) followed by
  /// consumption records ({kind: "consume", estimate_call, user, item, round, reused}).
  void write_event_log(std::ostream& os) const {
    for (const Event& e : events_) {
      nlohmann::json j{{"round", e.round}, {"user", e.user}, {"item", e.item},
                       {"purpose", to_string(e.purpose)}, {"reward", e.reward}};
      os << j.dump() << '\n';
    }
    for (const ConsumeRecord& c : consumption_) {
      nlohmann::json j{{"kind", "consume"}, {"estimate_call", c.estimate_call}, {"user", c.user},
                       {"item", c.item}, {"round", c.round}, {"reused", c.reused}};
      os << j.dump() << '\n';
    }
  }

 private:
  const Instance& inst_;
  std::uint64_t noise_seed_;
  BlockingLedger ledger_;
  std::vector<std::size_t> cursor_;
  std::vector<std::size_t> chosen_;
  std::vector<double> rewards_;
  std::vector<Event> events_;
  std::vector<ConsumeRecord> consumption_;
  std::size_t estimate_calls_ = 0;
};

}  // namespace bbandit
