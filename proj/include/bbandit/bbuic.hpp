#pragma once

// Item-clustered variant of B-LATTICE for B = 1: a binary ledger whose stored
// observations may feed any number of estimates, and item-graph closure of the
// active sets and of the exploit sets.

#include "bbandit/blattice.hpp"

namespace bbandit {

struct BbuicHyper {
  BlatticeHyper base{};
  /// Item cluster count C′; 0 takes the instance value.
  std::size_t item_clusters = 0;
};

inline std::vector<PhaseRecord> run_bbuic(Simulation& sim, const BbuicHyper& hyper, Rng& rng) {
  const Instance& inst = sim.instance();
  if (inst.budget != 1) throw ConfigError("the item-cluster variant requires B = 1");
  if (sim.ledger().mode() != LedgerMode::kBinaryReuse)
    throw ConfigError("the item-cluster variant needs a binary-reuse ledger");
  detail::ItemClusterMode icm;
  icm.enabled = true;
  icm.item_clusters = hyper.item_clusters > 0 ? hyper.item_clusters : inst.item_clusters;
  if (icm.item_clusters == 0) throw ConfigError("item cluster count C' is unknown");
  return detail::run_phases(sim, hyper.base, icm, rng);
}

inline BlatticeResult run_bbuic(const Instance& inst, const BbuicHyper& hyper, std::uint64_t seed) {
  Simulation sim(inst, noise_seed_for(seed), LedgerMode::kBinaryReuse);
  Rng rng = make_stream(seed, "bbuic");
  BlatticeResult out;
  out.phases = run_bbuic(sim, hyper, rng);
  out.run = collect(sim, "bbuic");
  return out;
}

}  // namespace bbandit
