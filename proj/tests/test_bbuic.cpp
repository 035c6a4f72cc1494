#include "bbandit/bbandit.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace bbandit;

namespace {

GeneratorSpec item_clustered(std::size_t n, std::size_t C, std::size_t Cp, std::size_t T) {
  GeneratorSpec g = GeneratorSpec::d1();
  g.users = g.items = n;
  g.clusters = C;
  g.item_clusters = Cp;
  g.horizon = T;
  g.budget = 1;
  g.noise = NoiseModel::gaussian(0.0);
  return g;
}

}  // namespace

TEST(Bbuic, RequiresUnitBudget) {
  GeneratorSpec g = item_clustered(20, 2, 2, 10);
  g.budget = 2;
  const Instance inst = generate_instance(g, 1);
  EXPECT_THROW(run_bbuic(inst, BbuicHyper{}, 1), ConfigError);
}

TEST(Bbuic, RequiresItemClusterCount) {
  GeneratorSpec g = item_clustered(20, 2, 0, 10);
  const Instance inst = generate_instance(g, 1);
  EXPECT_THROW(run_bbuic(inst, BbuicHyper{}, 1), ConfigError);
  BbuicHyper h;
  h.item_clusters = 2;
  EXPECT_NO_THROW(run_bbuic(inst, h, 1));
}

TEST(Bbuic, RejectsConsumeOnceLedger) {
  const Instance inst = generate_instance(item_clustered(20, 2, 2, 10), 1);
  Simulation sim(inst, 1);
  Rng rng(1);
  EXPECT_THROW(run_bbuic(sim, BbuicHyper{}, rng), ConfigError);
}

TEST(Bbuic, NeverRepeatsAPair) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GeneratorSpec g = item_clustered(40, 2, 3, 30);
    g.noise = NoiseModel::gaussian(0.5);
    const Instance inst = generate_instance(g, seed);
    const auto res = run_bbuic(inst, BbuicHyper{}, seed);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const Event& e : res.run.events) EXPECT_TRUE(seen.insert({e.user, e.item}).second);
    EXPECT_EQ(res.run.max_count, 1u);
    EXPECT_EQ(res.run.trace.rounds.size(), inst.horizon);
  }
}

TEST(Bbuic, NoiselessItemComponentsRecoverItemClusters) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Instance inst = generate_instance(item_clustered(60, 2, 2, 30), seed);
    const auto res = run_bbuic(inst, BbuicHyper{}, seed);
    ASSERT_FALSE(res.phases.empty());
    const PhaseRecord& ph = res.phases.front();
    ASSERT_TRUE(ph.explored);
    ASSERT_EQ(ph.item_components.size(), 2u) << "seed " << seed;
    for (const IndexSet& comp : ph.item_components)
      for (std::size_t j : comp) EXPECT_EQ(inst.item_cluster_of[j], inst.item_cluster_of[comp.front()]);
  }
}

TEST(Bbuic, ActiveSetsClosedUnderItemGraph) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    GeneratorSpec g = item_clustered(40, 2, 4, 30);
    g.noise = NoiseModel::gaussian(0.3);
    const Instance inst = generate_instance(g, seed);
    BbuicHyper h;
    h.base.c = 1e-3;
    const auto res = run_bbuic(inst, h, seed);
    for (const PhaseRecord& ph : res.phases) {
      if (ph.item_components.empty()) continue;
      for (const IndexSet& items : ph.component_items) {
        const std::set<std::size_t> active(items.begin(), items.end());
        for (const IndexSet& comp : ph.item_components) {
          std::size_t inside = 0;
          for (std::size_t j : comp) inside += active.count(j);
          EXPECT_TRUE(inside == 0 || inside == comp.size());
        }
      }
    }
  }
}

TEST(Bbuic, SingletonItemClustersDoNotExpand) {
  const Instance inst = generate_instance(item_clustered(30, 2, 30, 20), 2);
  BbuicHyper h;
  h.base.eps1 = 1e-6 * inst.p_max();
  const auto res = run_bbuic(inst, h, 2);
  for (const PhaseRecord& ph : res.phases)
    for (const IndexSet& comp : ph.item_components) EXPECT_EQ(comp.size(), 1u);
}

TEST(Bbuic, NoiselessExploitRecommendsGoldenItems) {
  std::size_t exploits = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    // T/B = 45 > N/C' so the golden set spans both item clusters and the gap test can fire.
    const Instance inst = generate_instance(item_clustered(60, 2, 2, 45), seed);
    const auto res = run_bbuic(inst, BbuicHyper{}, seed);
    const Matrix mean = mean_reward_matrix(inst);
    const std::size_t k = golden_count(inst.horizon, inst.budget);
    for (const Event& e : res.run.events) {
      if (e.purpose != Purpose::kExploit) continue;
      std::vector<double> row(inst.items);
      for (std::size_t j = 0; j < inst.items; ++j) row[j] = mean(static_cast<Eigen::Index>(e.user), static_cast<Eigen::Index>(j));
      EXPECT_GE(mean(static_cast<Eigen::Index>(e.user), static_cast<Eigen::Index>(e.item)), kth_largest(row, k));
      ++exploits;
    }
  }
  EXPECT_GT(exploits, 0u);
}

TEST(Bbuic, ReusedObservationsAreTagged) {
  GeneratorSpec g = item_clustered(40, 2, 2, 35);
  g.noise = NoiseModel::gaussian(0.5);
  const Instance inst = generate_instance(g, 4);
  BbuicHyper h;
  h.base.c = 1e-3;
  const auto res = run_bbuic(inst, h, 4);
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> made;
  for (const Event& e : res.run.events) made.insert({e.user, e.item, e.round});
  for (const ConsumeRecord& c : res.run.consumption) EXPECT_TRUE(made.count({c.user, c.item, c.round}));
}
