#include "bbandit/bbandit.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

using namespace bbandit;
using Json = nlohmann::json;

namespace {

Json full_config() {
  return Json::parse(R"({
    "datasets": [
      {"name": "d1", "scale": 0.2},
      {"name": "d2", "scale": 0.5, "horizon": 20, "budget": 2, "clusters": 3,
       "noise": {"kind": "gaussian", "sigma": 0.1}},
      {"name": "d3", "users": 12, "items": 10, "horizon": 8,
       "entries": {"law": "uniform", "a": 0.1, "b": 0.9}, "noise": {"kind": "sign_bernoulli"},
       "item_clusters": 2}
    ],
    "algorithms": [
      {"kind": "blattice", "params": {"c": 0.01, "eps1": 2.0, "solver": {"tol": 1e-7, "lambda": 0.3}}},
      {"kind": "bbuic", "label": "bbuic-2", "params": {"item_clusters": 2, "mu": 3.0}},
      {"kind": "etc", "label": "etc10", "params": {"explore_rounds": 10}},
      {"kind": "etc", "label": "etc-p", "params": {"p": 0.2, "rank": 3}},
      {"kind": "pblattice", "params": {"m_base": 4, "kmeans": {"restarts": 3}}},
      {"kind": "greedy", "params": {"theta": 0.4}},
      {"kind": "oracle"},
      {"kind": "random"}
    ],
    "seeds": {"start": 7, "count": 3},
    "horizons": [10, 20],
    "threads": 2,
    "output": {"dir": "results", "events": true}
  })");
}

std::string error_of(const Json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, ParsesEverySection) {
  const RunConfig c = parse_run_config(full_config());
  ASSERT_EQ(c.datasets.size(), 3u);
  EXPECT_EQ(c.datasets[1].resolve().budget, 2u);
  EXPECT_EQ(c.datasets[1].resolve().clusters, 3u);
  EXPECT_EQ(c.datasets[2].resolve().item_clusters, 2u);
  EXPECT_EQ(c.datasets[2].resolve().noise.kind, NoiseKind::kSignBernoulli);
  ASSERT_EQ(c.algorithms.size(), 8u);
  EXPECT_EQ(c.algorithms[0].label, "blattice");
  EXPECT_DOUBLE_EQ(c.algorithms[0].blattice.c, 0.01);
  ASSERT_TRUE(c.algorithms[0].blattice.solver.lambda_override);
  EXPECT_DOUBLE_EQ(*c.algorithms[0].blattice.solver.lambda_override, 0.3);
  EXPECT_EQ(c.algorithms[1].bbuic.item_clusters, 2u);
  EXPECT_EQ(*c.algorithms[2].etc.explore_rounds, 10u);
  EXPECT_EQ(c.algorithms[4].pblattice.kmeans.restarts, 3);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7, 8, 9}));
  EXPECT_EQ(c.horizons, (std::vector<std::size_t>{10, 20}));
  EXPECT_EQ(c.threads, 2u);
  EXPECT_EQ(c.output.dir, "results");
  EXPECT_EQ(c.output.csv, "results.csv");
  EXPECT_TRUE(c.output.events);
}

TEST(Config, NormalizedFormRoundTrips) {
  const Json once = to_json(parse_run_config(full_config()));
  const Json twice = to_json(parse_run_config(once));
  EXPECT_EQ(once, twice);
}

TEST(Config, MinimalConfigTakesDefaults) {
  const RunConfig c =
      parse_run_config(Json::parse(R"({"datasets":[{"name":"d2"}],"algorithms":[{"kind":"random"}],"seeds":[1]})"));
  const GeneratorSpec g = c.datasets[0].resolve();
  EXPECT_EQ(g.users, 150u);
  EXPECT_EQ(g.horizon, 60u);
  EXPECT_TRUE(c.horizons.empty());
  EXPECT_EQ(c.threads, 1u);
  EXPECT_EQ(c.sweep_spec().algorithms.size(), 1u);
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"/tempo", "config: unknown key 'tempo'"},
      {"/datasets/0/colour", "config.datasets[0]: unknown key 'colour'"},
      {"/datasets/1/noise/mean", "config.datasets[1].noise: unknown key 'mean'"},
      {"/datasets/2/entries/c", "config.datasets[2].entries: unknown key 'c'"},
      {"/algorithms/0/weight", "config.algorithms[0]: unknown key 'weight'"},
      {"/algorithms/0/params/x", "config.algorithms[0].params: unknown key 'x'"},
      {"/algorithms/0/params/solver/y", "config.algorithms[0].params.solver: unknown key 'y'"},
      {"/algorithms/4/params/kmeans/k", "config.algorithms[4].params.kmeans: unknown key 'k'"},
      {"/algorithms/6/params/z", "config.algorithms[6].params: unknown key 'z'"},
      {"/seeds/stop", "config.seeds: unknown key 'stop'"},
      {"/output/format", "config.output: unknown key 'format'"},
  };
  for (const auto& [pointer, message] : cases) {
    Json j = full_config();
    if (pointer == "/algorithms/6/params/z") j["algorithms"][6]["params"] = Json::object();
    j[Json::json_pointer(pointer)] = 1;
    EXPECT_NE(error_of(j).find(message), std::string::npos) << pointer << " -> " << error_of(j);
  }
}

TEST(Config, KeysOfOtherAlgorithmsAreUnknown) {
  Json j = full_config();
  j["algorithms"][5]["params"]["explore_rounds"] = 3;
  EXPECT_NE(error_of(j).find("unknown key 'explore_rounds'"), std::string::npos);
}

TEST(Config, BadValuesAreRejected) {
  const std::vector<std::pair<std::string, Json>> cases{
      {"/datasets/0/name", "d9"},
      {"/datasets/0/scale", -1.0},
      {"/datasets/1/noise/sigma", -0.5},
      {"/datasets/1/noise/kind", "laplace"},
      {"/datasets/2/entries/law", "cauchy"},
      {"/datasets/2/entries/a", 2.0},
      {"/datasets/2/horizon", 50},
      {"/algorithms/0/kind", "lattice"},
      {"/algorithms/0/params/c", 0.0},
      {"/algorithms/0/params/solver/tol", -1.0},
      {"/algorithms/2/params/p", 0.3},
      {"/algorithms/3/params/p", 1.5},
      {"/algorithms/1/label", "etc10"},
      {"/algorithms/1/label", "a,b"},
      {"/algorithms/4/params/kmeans/restarts", 0},
      {"/seeds", Json::array()},
      {"/seeds", Json::array({-1})},
      {"/horizons", Json::array({0})},
      {"/threads", 0},
      {"/threads", "many"},
      {"/datasets", Json::array()},
      {"/algorithms", Json::object()},
  };
  for (const auto& [pointer, value] : cases) {
    Json j = full_config();
    j[Json::json_pointer(pointer)] = value;
    EXPECT_FALSE(error_of(j).empty()) << pointer << " = " << value.dump();
  }
}

TEST(Config, MissingRequiredSectionsAreRejected) {
  for (const char* key : {"datasets", "algorithms", "seeds"}) {
    Json j = full_config();
    j.erase(key);
    EXPECT_NE(error_of(j).find(std::string("missing required key '") + key + "'"), std::string::npos);
  }
}

TEST(Config, SeedListSyntax) {
  EXPECT_EQ(parse_seed_list("4,2,9"), (std::vector<std::uint64_t>{4, 2, 9}));
  EXPECT_EQ(parse_seed_list("10:3"), (std::vector<std::uint64_t>{10, 11, 12}));
  EXPECT_EQ(parse_seed_list("0"), (std::vector<std::uint64_t>{0}));
  for (const char* bad : {"", "a", "1,,2", "-1", "3:0", "3:", ":2", "1.5"})
    EXPECT_THROW(parse_seed_list(bad), ConfigError) << bad;
}

TEST(Config, SweepSpecCarriesTheGrid) {
  const SweepSpec s = parse_run_config(full_config()).sweep_spec();
  EXPECT_EQ(s.datasets.size(), 3u);
  EXPECT_EQ(s.algorithms.size(), 8u);
  EXPECT_EQ(s.seeds.size(), 3u);
  EXPECT_EQ(s.horizons.size(), 2u);
  EXPECT_EQ(s.threads, 2u);
  EXPECT_EQ(s.datasets[0].users, 30u);
}

TEST(Config, LoadFromFile) {
  const std::string path = ::testing::TempDir() + "bbandit_config_test.json";
  {
    std::ofstream out(path);
    out << full_config().dump(2);
  }
  EXPECT_EQ(load_run_config(path).algorithms.size(), 8u);
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  EXPECT_THROW(load_run_config(path), ConfigError);
  std::remove(path.c_str());
  EXPECT_THROW(load_run_config(path), ConfigError);
}
