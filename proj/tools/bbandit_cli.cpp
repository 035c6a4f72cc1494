// Command-line front end: run / sweep from a JSON config, baseline-comparison figure
// data, instance generation and diagnostics.

#include "bbandit/bbandit.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace bbandit;

namespace {

struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out_dir;
  std::string seeds;
  std::size_t threads = 0;
  bool quiet = false;
};

std::size_t effective_threads(std::size_t flag, std::size_t fallback) {
  if (const char* env = std::getenv("BB_THREADS")) {
    const std::string s(env);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos || std::stoul(s) == 0)
      throw ConfigError("BB_THREADS must be a positive integer");
    return std::stoul(s);
  }
  return flag > 0 ? flag : fallback;
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw RuntimeFailure("cannot write '" + p.string() + "'");
  return os;
}

void print_summary(const std::vector<CellResult>& cells) {
  for (const Summary& s : aggregate(cells)) {
    std::cout << s.dataset << "  " << s.algorithm << "  T=" << s.horizon << "  runs=" << s.runs;
    if (s.failures) std::cout << "  failed=" << s.failures;
    std::cout << "  regret=" << format_real(s.mean) << " +- " << format_real(s.stderr_) << '\n';
  }
}

void write_outputs(const fs::path& dir, const OutputConfig& out, const std::vector<CellResult>& cells) {
  {
    auto os = open_out(dir / out.csv);
    write_csv(os, cells);
  }
  auto os = open_out(dir / out.summary);
  os << summary_json(cells).dump(2) << '\n';
}

RunConfig load_with_overrides(const Common& c) {
  RunConfig cfg = load_run_config(c.config);
  if (!c.seeds.empty()) cfg.seeds = parse_seed_list(c.seeds);
  if (!c.out_dir.empty()) cfg.output.dir = c.out_dir;
  cfg.threads = effective_threads(c.threads, cfg.threads);
  return cfg;
}

int finish(const std::vector<CellResult>& cells, bool quiet) {
  if (!quiet) print_summary(cells);
  std::size_t failed = 0;
  std::string first;
  for (const CellResult& c : cells)
    if (!c.ok && failed++ == 0) first = c.algorithm + " seed " + std::to_string(c.seed) + ": " + c.error;
  if (failed) throw RuntimeFailure(std::to_string(failed) + " cell(s) failed; first: " + first);
  return 0;
}

int cmd_run(const Common& c) {
  const RunConfig cfg = load_with_overrides(c);
  if (cfg.datasets.size() != 1 || cfg.algorithms.size() != 1)
    throw ConfigError("run takes exactly one dataset and one algorithm; use sweep for grids");
  const fs::path dir = prepare_dir(cfg.output.dir);
  std::vector<CellResult> cells = sweep(cfg.sweep_spec());
  write_outputs(dir, cfg.output, cells);
  if (cfg.output.events) {
    const GeneratorSpec spec = cfg.datasets.front().resolve();
    const AlgorithmSpec& alg = cfg.algorithms.front();
    for (std::uint64_t seed : cfg.seeds) {
      const Instance inst = generate_instance(spec, seed);
      RunResult run;
      try {
        run = run_algorithm(inst, alg, seed);
      } catch (const std::exception&) {
        continue;  // already reported through the cell
      }
      auto os = open_out(dir / ("events_" + alg.label + "_" + std::to_string(seed) + ".jsonl"));
      for (const Event& e : run.events)
        os << Json{{"round", e.round}, {"user", e.user}, {"item", e.item}, {"purpose", to_string(e.purpose)},
                   {"reward", e.reward}}
                  .dump()
           << '\n';
      for (const ConsumeRecord& r : run.consumption)
        os << Json{{"kind", "consume"}, {"estimate_call", r.estimate_call}, {"user", r.user}, {"item", r.item},
                   {"round", r.round}, {"reused", r.reused}}
                  .dump()
           << '\n';
    }
  }
  return finish(cells, c.quiet);
}

int cmd_sweep(const Common& c) {
  const RunConfig cfg = load_with_overrides(c);
  const fs::path dir = prepare_dir(cfg.output.dir);
  std::vector<CellResult> cells = sweep(cfg.sweep_spec());
  write_outputs(dir, cfg.output, cells);
  return finish(cells, c.quiet);
}

std::string plot_script(const std::string& csv_name, const std::string& title) {
  std::string s = R"PY(#!/usr/bin/env python3
# Cumulative regret and round-wise mean reward per algorithm, averaged over seeds.
import csv
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "@CSV@")
cum = defaultdict(lambda: defaultdict(list))
rew = defaultdict(lambda: defaultdict(list))
with open(path) as f:
    for row in csv.DictReader(f):
        t = int(row["t"])
        cum[row["algorithm"]][t].append(float(row["cumulative_regret"]))
        rew[row["algorithm"]][t].append(float(row["roundwise_mean_reward"]))

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
for alg in sorted(cum):
    ts = sorted(cum[alg])
    ax1.plot(ts, [sum(cum[alg][t]) / len(cum[alg][t]) for t in ts], label=alg)
    ax2.plot(ts, [sum(rew[alg][t]) / len(rew[alg][t]) for t in ts], label=alg)
ax1.set_xlabel("round t")
ax1.set_ylabel("cumulative regret")
ax2.set_xlabel("round t")
ax2.set_ylabel("round-wise mean reward")
ax1.legend()
fig.suptitle("@TITLE@")
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
)PY";
  auto put = [&](const std::string& key, const std::string& value) {
    for (std::size_t p = s.find(key); p != std::string::npos; p = s.find(key, p + value.size()))
      s.replace(p, key.size(), value);
  };
  put("@CSV@", csv_name);
  put("@TITLE@", title);
  return s;
}

int cmd_paperfig(const Common& c, const std::string& dataset, double scale) {
  if (dataset != "d1" && dataset != "d2" && dataset != "d3")
    throw ConfigError("paperfig dataset must be d1, d2 or d3");
  SweepSpec spec;
  spec.datasets.push_back(GeneratorSpec::named(dataset, scale));
  spec.algorithms.push_back(AlgorithmSpec::of(AlgorithmKind::kPbLattice, "pblattice"));
  spec.algorithms.push_back(AlgorithmSpec::etc_rounds(10));
  spec.algorithms.push_back(AlgorithmSpec::etc_rounds(30));
  if (dataset == "d3") spec.algorithms.push_back(AlgorithmSpec::of(AlgorithmKind::kGreedy, "greedy"));
  spec.algorithms.push_back(AlgorithmSpec::of(AlgorithmKind::kRandom, "random"));
  spec.algorithms.push_back(AlgorithmSpec::of(AlgorithmKind::kOracle, "oracle"));
  spec.seeds = parse_seed_list(c.seeds.empty() ? "1:10" : c.seeds);
  spec.threads = effective_threads(c.threads, 1);

  const fs::path dir = prepare_dir(c.out_dir.empty() ? "out" : c.out_dir);
  char tag[64];
  std::snprintf(tag, sizeof tag, "paperfig_%s_%g", dataset.c_str(), scale);
  const std::string csv = std::string(tag) + ".csv";
  std::vector<CellResult> cells = sweep(spec);
  write_outputs(dir, {dir.string(), csv, std::string(tag) + "_summary.json", false}, cells);
  {
    auto os = open_out(dir / (std::string(tag) + "_plot.py"));
    os << plot_script(csv, dataset + " at scale " + std::to_string(scale));
  }
  return finish(cells, c.quiet);
}

int cmd_diag(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open instance '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("instance '" + path + "' is not valid JSON: " + e.what());
  }
  const Instance inst = instance_from_json(j);
  const Diagnostics d = diagnostics(inst.P, inst.cluster_of, inst.clusters);
  Json out{{"mu", d.mu()}, {"mu_row", d.mu_row}, {"mu_col", d.mu_col}, {"tau", d.tau}};
  if (d.kappa_infinite)
    out["kappa"] = "inf";
  else
    out["kappa"] = d.kappa;
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_gen(const std::string& dataset, double scale, std::uint64_t seed, const std::string& out) {
  const Instance inst = generate_instance(GeneratorSpec::named(dataset, scale), seed);
  const std::string text = instance_to_json(inst).dump() + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    auto os = open_out(out);
    os << text;
  }
  return 0;
}

int report(const char* kind, const std::string& message, int code) {
  std::string flat = message;
  for (char& ch : flat)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::cerr << Json{{"error", kind}, {"message", flat}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blocked collaborative bandits: simulations and experiments"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) sub->add_option("--config", common.config, "Run configuration (JSON)")->required();
    sub->add_option("--out-dir", common.out_dir, "Output directory");
    sub->add_option("--seeds", common.seeds, "Seeds as a,b,c or start:count");
    sub->add_option("--threads", common.threads, "Worker threads (BB_THREADS overrides)");
    sub->add_flag("--quiet", common.quiet, "Print nothing on success");
  };
  auto* run = app.add_subcommand("run", "Run one algorithm on one dataset over the configured seeds");
  add_common(run, true);
  auto* sw = app.add_subcommand("sweep", "Run the full dataset x algorithm x seed x horizon grid");
  add_common(sw, true);

  std::string dataset;
  double scale = 1.0;
  auto* fig = app.add_subcommand("paperfig", "Regret curves of the baseline comparison plus a plot script");
  fig->add_option("dataset", dataset, "d1, d2 or d3")->required();
  fig->add_option("scale", scale, "Scale of the 150x150, T=60 setup")->required();
  add_common(fig, false);

  std::string instance_path;
  auto* diag = app.add_subcommand("diag", "Print incoherence, condition number and cluster-size ratio");
  diag->add_option("instance", instance_path, "Instance JSON")->required();

  std::uint64_t seed = 1;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate an instance and write it as JSON");
  gen->add_option("dataset", dataset, "d1, d2 or d3")->required();
  gen->add_option("scale", scale, "Scale of the 150x150, T=60 setup")->required();
  gen->add_option("--seed", seed, "Instance seed");
  gen->add_option("--out", gen_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("config", e.what(), 1);
  }

  try {
    if (*run) return cmd_run(common);
    if (*sw) return cmd_sweep(common);
    if (*fig) return cmd_paperfig(common, dataset, scale);
    if (*diag) return cmd_diag(instance_path);
    if (*gen) return cmd_gen(dataset, scale, seed, gen_out);
  } catch (const ConfigError& e) {
    return report("config", e.what(), 1);
  } catch (const std::exception& e) {
    return report("runtime", e.what(), 2);
  }
  return 0;
}
