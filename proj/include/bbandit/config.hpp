#pragma once

// JSON run configuration: datasets, algorithms with their parameters, seeds,
// horizons and output locations. Unknown keys are rejected at every level.
// to_json writes the fully resolved form, so parse(to_json(c)) == c.

#include "bbandit/harness.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace bbandit {

using Json = nlohmann::json;

struct DatasetConfig {
  std::string name = "d1";
  double scale = 1.0;
  std::optional<std::size_t> users;
  std::optional<std::size_t> items;
  std::optional<std::size_t> clusters;
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> budget;
  std::optional<EntryLawSpec> entries;
  std::optional<NoiseModel> noise;
  std::optional<std::size_t> item_clusters;

  GeneratorSpec resolve() const {
    GeneratorSpec s = GeneratorSpec::named(name, scale);
    if (users) s.users = *users;
    if (items) s.items = *items;
    if (clusters) s.clusters = *clusters;
    if (horizon) s.horizon = *horizon;
    if (budget) s.budget = *budget;
    if (entries) s.entries = *entries;
    if (noise) s.noise = *noise;
    if (item_clusters) s.item_clusters = *item_clusters;
    return s;
  }
};

struct OutputConfig {
  std::string dir = "out";
  std::string csv = "results.csv";
  std::string summary = "summary.json";
  /// Also write one JSON-lines event log per run (run command only).
  bool events = false;
};

struct RunConfig {
  std::vector<DatasetConfig> datasets;
  std::vector<AlgorithmSpec> algorithms;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> horizons;
  std::size_t threads = 1;
  OutputConfig output{};

  SweepSpec sweep_spec() const {
    SweepSpec s;
    for (const auto& d : datasets) s.datasets.push_back(d.resolve());
    s.algorithms = algorithms;
    s.seeds = seeds;
    s.horizons = horizons;
    s.threads = threads;
    return s;
  }
};

namespace detail {

/// Walks one JSON object, remembering which keys were read, and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  void mark(const std::string& key) { seen_.insert(key); }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  std::optional<T> opt(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    return convert<T>(j_.at(key), key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    auto v = opt<T>(key);
    return v ? *v : fallback;
  }

  template <class T>
  T require(const std::string& key) {
    auto v = opt<T>(key);
    if (!v) fail("missing required key '" + key + "'");
    return *v;
  }

  std::string sub(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail("unknown key '" + it.key() + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }

 private:
  template <class T>
  T convert(const Json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail("'" + key + "' must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail("'" + key + "' must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail("'" + key + "' must be an integer");
      if (std::is_unsigned_v<T> && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
        fail("'" + key + "' must be nonnegative");
      return v.get<T>();
    } else {
      if (!v.is_number()) fail("'" + key + "' must be a number");
      return v.get<T>();
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string entry_law_name(EntryLaw law) {
  switch (law) {
    case EntryLaw::kNormal: return "normal";
    case EntryLaw::kUniform: return "uniform";
    case EntryLaw::kDiscreteGrid: return "grid";
  }
  return "?";
}

inline EntryLawSpec parse_entries(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  EntryLawSpec e;
  const auto law = r.require<std::string>("law");
  if (law == "normal")
    e.law = EntryLaw::kNormal;
  else if (law == "uniform")
    e.law = EntryLaw::kUniform;
  else if (law == "grid")
    e.law = EntryLaw::kDiscreteGrid;
  else
    r.fail("unknown entry law '" + law + "'");
  e.a = r.get<double>("a", e.a);
  e.b = r.get<double>("b", e.b);
  r.finish();
  return e;
}

inline NoiseModel parse_noise(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  const auto kind = r.require<std::string>("kind");
  NoiseModel n;
  if (kind == "gaussian")
    n = NoiseModel::gaussian(r.get<double>("sigma", 0.5));
  else if (kind == "sign_bernoulli")
    n = NoiseModel::sign_bernoulli();
  else
    r.fail("unknown noise kind '" + kind + "'");
  if (n.sigma < 0.0) r.fail("sigma must be nonnegative");
  r.finish();
  return n;
}

inline DatasetConfig parse_dataset(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  DatasetConfig d;
  d.name = r.require<std::string>("name");
  d.scale = r.get<double>("scale", 1.0);
  d.users = r.opt<std::size_t>("users");
  d.items = r.opt<std::size_t>("items");
  d.clusters = r.opt<std::size_t>("clusters");
  d.horizon = r.opt<std::size_t>("horizon");
  d.budget = r.opt<std::size_t>("budget");
  if (r.has("entries")) d.entries = parse_entries(r.raw("entries"), r.sub("entries"));
  if (r.has("noise")) d.noise = parse_noise(r.raw("noise"), r.sub("noise"));
  d.item_clusters = r.opt<std::size_t>("item_clusters");
  r.finish();
  try {
    d.resolve().validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  return d;
}

inline SolverConfig parse_solver(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  SolverConfig s;
  s.c_lambda = r.get<double>("c_lambda", s.c_lambda);
  s.tol = r.get<double>("tol", s.tol);
  s.max_iters = r.get<int>("max_iters", s.max_iters);
  s.step = r.get<double>("step", s.step);
  s.lambda_override = r.opt<double>("lambda");
  s.accelerate = r.get<bool>("accelerate", s.accelerate);
  r.finish();
  try {
    s.validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  return s;
}

inline Json solver_to_json(const SolverConfig& s) {
  Json j{{"c_lambda", s.c_lambda}, {"tol", s.tol}, {"max_iters", s.max_iters}, {"step", s.step},
         {"accelerate", s.accelerate}};
  if (s.lambda_override) j["lambda"] = *s.lambda_override;
  return j;
}

inline void parse_blattice_fields(ObjectReader& r, BlatticeHyper& h) {
  h.clusters = r.get<std::size_t>("clusters", h.clusters);
  h.sigma = r.opt<double>("sigma");
  h.p_max = r.opt<double>("p_max");
  h.mu = r.opt<double>("mu");
  h.eps1 = r.opt<double>("eps1");
  h.c = r.get<double>("c", h.c);
  h.p_floor_c = r.get<double>("p_floor_c", h.p_floor_c);
  h.sigma_floor = r.get<double>("sigma_floor", h.sigma_floor);
  h.max_phases = r.get<std::size_t>("max_phases", h.max_phases);
  if (r.has("solver")) h.solver = parse_solver(r.raw("solver"), r.sub("solver"));
  if (!(h.c > 0.0)) r.fail("c must be positive");
}

inline Json blattice_to_json(const BlatticeHyper& h) {
  Json j{{"clusters", h.clusters},   {"c", h.c},
         {"p_floor_c", h.p_floor_c}, {"sigma_floor", h.sigma_floor},
         {"max_phases", h.max_phases}, {"solver", solver_to_json(h.solver)}};
  if (h.sigma) j["sigma"] = *h.sigma;
  if (h.p_max) j["p_max"] = *h.p_max;
  if (h.mu) j["mu"] = *h.mu;
  if (h.eps1) j["eps1"] = *h.eps1;
  return j;
}

inline AlgorithmSpec parse_algorithm(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  AlgorithmSpec a;
  try {
    a.kind = parse_algorithm_kind(r.require<std::string>("kind"));
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  a.label = r.get<std::string>("label", to_string(a.kind));
  if (a.label.empty() || a.label.find_first_of(",\n\"") != std::string::npos)
    r.fail("label must be nonempty and free of commas, quotes and newlines");
  static const Json empty = Json::object();
  r.mark("params");
  const Json& params = r.has("params") ? r.raw("params") : empty;
  r.finish();
  ObjectReader p(params, r.sub("params"));
  switch (a.kind) {
    case AlgorithmKind::kBlattice:
      parse_blattice_fields(p, a.blattice);
      break;
    case AlgorithmKind::kBbuic:
      parse_blattice_fields(p, a.bbuic.base);
      a.bbuic.item_clusters = p.get<std::size_t>("item_clusters", a.bbuic.item_clusters);
      break;
    case AlgorithmKind::kEtc: {
      EtcConfig& e = a.etc;
      e.p_override = p.opt<double>("p");
      e.explore_rounds = p.opt<std::size_t>("explore_rounds");
      e.p_const = p.get<double>("p_const", e.p_const);
      e.sigma = p.opt<double>("sigma");
      e.mu = p.opt<double>("mu");
      e.rank = p.get<std::size_t>("rank", e.rank);
      e.sigma_floor = p.get<double>("sigma_floor", e.sigma_floor);
      if (p.has("solver")) e.solver = parse_solver(p.raw("solver"), p.sub("solver"));
      if (e.p_override && e.explore_rounds) p.fail("give either p or explore_rounds, not both");
      try {
        e.validate();
      } catch (const ConfigError& err) {
        p.fail(err.what());
      }
      break;
    }
    case AlgorithmKind::kPbLattice: {
      PbLatticeConfig& c = a.pblattice;
      c.m_base = p.get<std::size_t>("m_base", c.m_base);
      c.m_slope = p.get<std::size_t>("m_slope", c.m_slope);
      c.nu_div = p.get<double>("nu_div", c.nu_div);
      c.clusters = p.get<std::size_t>("clusters", c.clusters);
      c.sigma = p.opt<double>("sigma");
      c.sigma_floor = p.get<double>("sigma_floor", c.sigma_floor);
      c.lambda_c = p.get<double>("lambda_c", c.lambda_c);
      if (p.has("kmeans")) {
        ObjectReader k(p.raw("kmeans"), p.sub("kmeans"));
        c.kmeans.max_iters = k.get<int>("max_iters", c.kmeans.max_iters);
        c.kmeans.restarts = k.get<int>("restarts", c.kmeans.restarts);
        c.kmeans.elbow_threshold = k.get<double>("elbow_threshold", c.kmeans.elbow_threshold);
        k.finish();
        if (c.kmeans.max_iters < 1 || c.kmeans.restarts < 1) k.fail("iteration and restart counts must be positive");
      }
      if (p.has("solver")) c.solver = parse_solver(p.raw("solver"), p.sub("solver"));
      try {
        c.validate();
      } catch (const ConfigError& err) {
        p.fail(err.what());
      }
      break;
    }
    case AlgorithmKind::kGreedy:
      a.greedy.theta = p.get<double>("theta", a.greedy.theta);
      a.greedy.alpha = p.get<double>("alpha", a.greedy.alpha);
      a.greedy.agreement = p.get<double>("agreement", a.greedy.agreement);
      break;
    case AlgorithmKind::kOracle:
    case AlgorithmKind::kRandom:
      break;
  }
  p.finish();
  return a;
}

inline Json params_to_json(const AlgorithmSpec& a) {
  switch (a.kind) {
    case AlgorithmKind::kBlattice: return blattice_to_json(a.blattice);
    case AlgorithmKind::kBbuic: {
      Json j = blattice_to_json(a.bbuic.base);
      j["item_clusters"] = a.bbuic.item_clusters;
      return j;
    }
    case AlgorithmKind::kEtc: {
      const EtcConfig& e = a.etc;
      Json j{{"p_const", e.p_const}, {"rank", e.rank}, {"sigma_floor", e.sigma_floor},
             {"solver", solver_to_json(e.solver)}};
      if (e.p_override) j["p"] = *e.p_override;
      if (e.explore_rounds) j["explore_rounds"] = *e.explore_rounds;
      if (e.sigma) j["sigma"] = *e.sigma;
      if (e.mu) j["mu"] = *e.mu;
      return j;
    }
    case AlgorithmKind::kPbLattice: {
      const PbLatticeConfig& c = a.pblattice;
      Json j{{"m_base", c.m_base},
             {"m_slope", c.m_slope},
             {"nu_div", c.nu_div},
             {"clusters", c.clusters},
             {"sigma_floor", c.sigma_floor},
             {"lambda_c", c.lambda_c},
             {"kmeans",
              {{"max_iters", c.kmeans.max_iters},
               {"restarts", c.kmeans.restarts},
               {"elbow_threshold", c.kmeans.elbow_threshold}}},
             {"solver", solver_to_json(c.solver)}};
      if (c.sigma) j["sigma"] = *c.sigma;
      return j;
    }
    case AlgorithmKind::kGreedy:
      return {{"theta", a.greedy.theta}, {"alpha", a.greedy.alpha}, {"agreement", a.greedy.agreement}};
    case AlgorithmKind::kOracle:
    case AlgorithmKind::kRandom:
      break;
  }
  return Json::object();
}

}  // namespace detail

/// Seeds from "a,b,c" or "start:count".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto number = [&](const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("bad seed '" + s + "'");
    return static_cast<std::uint64_t>(std::stoull(s));
  };
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::uint64_t start = number(text.substr(0, colon));
    const std::uint64_t count = number(text.substr(colon + 1));
    if (count == 0) throw ConfigError("seed count must be positive");
    for (std::uint64_t k = 0; k < count; ++k) out.push_back(start + k);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(number(item));
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

inline RunConfig parse_run_config(const Json& j) {
  detail::ObjectReader r(j, "config");
  RunConfig c;
  if (!r.has("datasets")) r.fail("missing required key 'datasets'");
  const Json& ds = r.raw("datasets");
  if (!ds.is_array() || ds.empty()) r.fail("'datasets' must be a nonempty array");
  for (std::size_t i = 0; i < ds.size(); ++i)
    c.datasets.push_back(detail::parse_dataset(ds[i], "config.datasets[" + std::to_string(i) + "]"));

  if (!r.has("algorithms")) r.fail("missing required key 'algorithms'");
  const Json& as = r.raw("algorithms");
  if (!as.is_array() || as.empty()) r.fail("'algorithms' must be a nonempty array");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < as.size(); ++i) {
    c.algorithms.push_back(detail::parse_algorithm(as[i], "config.algorithms[" + std::to_string(i) + "]"));
    if (!labels.insert(c.algorithms.back().label).second)
      r.fail("duplicate algorithm label '" + c.algorithms.back().label + "'");
  }

  if (!r.has("seeds")) r.fail("missing required key 'seeds'");
  const Json& seeds = r.raw("seeds");
  if (seeds.is_array()) {
    for (const Json& s : seeds) {
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
        r.fail("seeds must be nonnegative integers");
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  } else {
    detail::ObjectReader sr(seeds, r.sub("seeds"));
    const auto start = sr.require<std::uint64_t>("start");
    const auto count = sr.require<std::uint64_t>("count");
    sr.finish();
    for (std::uint64_t k = 0; k < count; ++k) c.seeds.push_back(start + k);
  }
  if (c.seeds.empty()) r.fail("'seeds' must not be empty");

  if (r.has("horizons")) {
    const Json& hs = r.raw("horizons");
    if (!hs.is_array()) r.fail("'horizons' must be an array");
    for (const Json& h : hs) {
      if (!h.is_number_integer() || h.get<std::int64_t>() <= 0) r.fail("horizons must be positive integers");
      c.horizons.push_back(h.get<std::size_t>());
    }
  } else {
    r.mark("horizons");
  }
  c.threads = r.get<std::size_t>("threads", 1);
  if (c.threads == 0) r.fail("threads must be at least 1");
  if (r.has("output")) {
    detail::ObjectReader o(r.raw("output"), r.sub("output"));
    c.output.dir = o.get<std::string>("dir", c.output.dir);
    c.output.csv = o.get<std::string>("csv", c.output.csv);
    c.output.summary = o.get<std::string>("summary", c.output.summary);
    c.output.events = o.get<bool>("events", c.output.events);
    o.finish();
  }
  r.finish();
  return c;
}

inline Json to_json(const RunConfig& c) {
  Json j;
  Json ds = Json::array();
  for (const DatasetConfig& d : c.datasets) {
    Json x{{"name", d.name}, {"scale", d.scale}};
    if (d.users) x["users"] = *d.users;
    if (d.items) x["items"] = *d.items;
    if (d.clusters) x["clusters"] = *d.clusters;
    if (d.horizon) x["horizon"] = *d.horizon;
    if (d.budget) x["budget"] = *d.budget;
    if (d.entries)
      x["entries"] = {{"law", detail::entry_law_name(d.entries->law)}, {"a", d.entries->a}, {"b", d.entries->b}};
    if (d.noise) {
      if (d.noise->kind == NoiseKind::kGaussian)
        x["noise"] = {{"kind", "gaussian"}, {"sigma", d.noise->sigma}};
      else
        x["noise"] = {{"kind", "sign_bernoulli"}};
    }
    if (d.item_clusters) x["item_clusters"] = *d.item_clusters;
    ds.push_back(std::move(x));
  }
  j["datasets"] = std::move(ds);
  Json as = Json::array();
  for (const AlgorithmSpec& a : c.algorithms)
    as.push_back({{"kind", to_string(a.kind)}, {"label", a.label}, {"params", detail::params_to_json(a)}});
  j["algorithms"] = std::move(as);
  j["seeds"] = c.seeds;
  j["horizons"] = c.horizons;
  j["threads"] = c.threads;
  j["output"] = {{"dir", c.output.dir}, {"csv", c.output.csv}, {"summary", c.output.summary}, {"events", c.output.events}};
  return j;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace bbandit
