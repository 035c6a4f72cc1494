#pragma once

// Noisy low-rank matrix completion by nuclear-norm regularized least squares,
// solved with proximal gradient (singular-value soft-thresholding), plus the
// rectangular-to-square block partitioning and instance diagnostics.

#include "bbandit/core.hpp"
#include "bbandit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bbandit {

/// One observed entry in the coordinates of the problem it belongs to.
struct Observation {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

struct CompletionProblem {
  std::size_t nrows = 0;
  std::size_t ncols = 0;
  std::vector<Observation> observed;  // Ω together with Z
  std::size_t rank = 1;               // r; informational for the convex program
  double sigma = 0.0;

  void validate() const {
    if (nrows == 0 || ncols == 0) throw ConfigError("completion problem has an empty dimension");
    if (rank == 0) throw ConfigError("rank bound must be at least 1");
    if (sigma < 0.0) throw ConfigError("noise scale must be nonnegative");
    for (const Observation& o : observed)
      if (o.row >= nrows || o.col >= ncols) throw ConfigError("observed index out of range");
  }
};

struct SolverConfig {
  double c_lambda = 2.0;
  double tol = 1e-8;
  int max_iters = 2000;
  double step = 1.0;
  /// Replaces C_λ·σ·√(|Ω|/max(nrows, ncols)) when set.
  std::optional<double> lambda_override;
  bool record_objective = false;
  /// Monotone accelerated proximal gradient; false gives the plain iteration.
  bool accelerate = true;

  void validate() const {
    if (!(tol > 0.0)) throw ConfigError("solver tol must be positive");
    if (max_iters < 1) throw ConfigError("solver max_iters must be at least 1");
    if (!(step > 0.0 && step <= 1.0)) throw ConfigError("solver step must lie in (0, 1]");
    if (c_lambda < 0.0) throw ConfigError("C_lambda must be nonnegative");
    if (lambda_override && *lambda_override < 0.0) throw ConfigError("lambda must be nonnegative");
  }
};

struct SolveResult {
  Matrix estimate;
  double lambda = 0.0;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Objective after every iteration (only when SolverConfig::record_objective).
  std::vector<double> objective_trace;
  /// Iterations whose objective rose above the previous one beyond rounding.
  int monotonicity_violations = 0;
};

namespace detail {

/// Duplicate (row, col) observations are averaged into one entry.
inline std::vector<Observation> merge_duplicates(const std::vector<Observation>& obs) {
  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, int>> acc;
  for (const Observation& o : obs) {
    auto& a = acc[{o.row, o.col}];
    a.first += o.value;
    a.second += 1;
  }
  std::vector<Observation> out;
  out.reserve(acc.size());
  for (const auto& [idx, a] : acc) out.push_back({idx.first, idx.second, a.first / a.second});
  return out;
}

}  // namespace detail

inline double completion_lambda(const CompletionProblem& prob, const SolverConfig& cfg) {
  if (cfg.lambda_override) return *cfg.lambda_override;
  const double omega = static_cast<double>(detail::merge_duplicates(prob.observed).size());
  return cfg.c_lambda * prob.sigma * std::sqrt(omega / static_cast<double>(std::max(prob.nrows, prob.ncols)));
}

/// ½·Σ_Ω (Q_ij − Z_ij)² + λ‖Q‖_*.
inline double completion_objective(const Matrix& Q, const std::vector<Observation>& observed, double lambda) {
  double fit = 0.0;
  for (const Observation& o : observed) {
    const double d = Q(static_cast<Eigen::Index>(o.row), static_cast<Eigen::Index>(o.col)) - o.value;
    fit += 0.5 * d * d;
  }
  return fit + (lambda > 0.0 ? lambda * singular_values(Q).sum() : 0.0);
}

/// Proximal gradient from Q = 0 on ½·Σ_Ω(Q − Z)² + λ‖Q‖_*.
///
/// Plain mode is the textbook iteration
///   Q ← SVT_{λ·step}(Q − step · mask_Ω(Q − Z)).
/// Accelerated mode (default) applies the same proximal step at an extrapolated
/// point and keeps whichever of {new prox point, current iterate} has the lower
/// objective (monotone FISTA); momentum restarts whenever the prox point is
/// rejected. Both keep the objective non-increasing because the masked quadratic
/// has Lipschitz constant 1 and step ≤ 1. Stops once an accepted step changes
/// the objective by less than `tol` relative.
inline SolveResult solve_block(const CompletionProblem& prob, const SolverConfig& cfg) {
  prob.validate();
  cfg.validate();
  if (prob.observed.empty()) throw ConfigError("solve_block needs at least one observation");

  const auto obs = detail::merge_duplicates(prob.observed);
  const auto rows = static_cast<Eigen::Index>(prob.nrows);
  const auto cols = static_cast<Eigen::Index>(prob.ncols);
  Eigen::ArrayXXd mask = Eigen::ArrayXXd::Zero(rows, cols);
  Eigen::ArrayXXd target = Eigen::ArrayXXd::Zero(rows, cols);
  for (const Observation& o : obs) {
    mask(static_cast<Eigen::Index>(o.row), static_cast<Eigen::Index>(o.col)) = 1.0;
    target(static_cast<Eigen::Index>(o.row), static_cast<Eigen::Index>(o.col)) = o.value;
  }

  SolveResult res;
  res.lambda = cfg.lambda_override
                   ? *cfg.lambda_override
                   : cfg.c_lambda * prob.sigma *
                         std::sqrt(static_cast<double>(obs.size()) / static_cast<double>(std::max(rows, cols)));
  const double threshold = res.lambda * cfg.step;

  // Returns the prox point from `base` and its objective value.
  Matrix candidate(rows, cols);
  auto prox_step = [&](const Matrix& base) {
    const Matrix G = (base.array() - cfg.step * mask * (base.array() - target)).matrix();
    const ThinSvd svd = thin_svd(G);
    Eigen::Index keep = 0;
    while (keep < svd.s.size() && svd.s(keep) > threshold) ++keep;
    double nuclear = 0.0;
    if (keep == 0) {
      candidate.setZero();
    } else {
      const Vector shrunk = (svd.s.head(keep).array() - threshold).matrix();
      nuclear = shrunk.sum();
      candidate.noalias() = svd.U.leftCols(keep) * shrunk.asDiagonal() * svd.V.leftCols(keep).transpose();
    }
    return 0.5 * (mask * (candidate.array() - target).square()).sum() + res.lambda * nuclear;
  };

  Matrix Q = Matrix::Zero(rows, cols);
  Matrix extrapolated = Q;
  Matrix previous = Q;
  double momentum = 1.0;
  double f = 0.5 * (mask * target.square()).sum();
  for (int it = 1; it <= cfg.max_iters; ++it) {
    res.iterations = it;
    const double f_candidate = prox_step(cfg.accelerate ? extrapolated : Q);
    const bool accepted = f_candidate <= f || !cfg.accelerate;
    double change = 0.0;
    if (accepted) {
      if (f_candidate > f + 1e-12 * std::max(1.0, std::abs(f))) ++res.monotonicity_violations;
      change = std::abs(f - f_candidate);
      previous.swap(Q);
      Q = candidate;
      f = f_candidate;
    }
    if (cfg.record_objective) res.objective_trace.push_back(f);
    if (cfg.accelerate) {
      if (accepted) {
        const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        extrapolated = Q + ((momentum - 1.0) / next) * (Q - previous);
        momentum = next;
      } else {
        extrapolated = Q;
        momentum = 1.0;
        continue;
      }
    }
    if (change <= cfg.tol * std::max(std::abs(f), std::numeric_limits<double>::min())) {
      res.converged = true;
      break;
    }
  }
  res.estimate = std::move(Q);
  res.objective = f;
  return res;
}

/// An observation in global (user, item) coordinates.
struct Sample {
  std::size_t user = 0;
  std::size_t item = 0;
  double value = 0.0;
};

struct EstimateResult {
  /// |users| × |items|, rows and columns in the order of the input sets.
  Matrix estimate;
  /// k = ⌈max/min⌉ groups along the longer dimension.
  std::size_t blocks = 1;
  bool partitioned_rows = false;
  /// Group of every index along the partitioned dimension.
  std::vector<std::size_t> group_of;
  /// Groups that had members but no observations; filled with zeros.
  std::size_t empty_blocks = 0;
  bool converged = true;
  int iterations = 0;
};

/// Splits the longer side into k = ⌈max/min⌉ uniformly random groups, solves
/// each (roughly square) block on its own, and reassembles.
inline EstimateResult estimate(const IndexSet& users, const IndexSet& items, double sigma, std::size_t rank,
                               const std::vector<Sample>& samples, const SolverConfig& cfg, Rng& rng) {
  if (users.empty() || items.empty()) throw ConfigError("estimate needs nonempty user and item sets");
  std::unordered_map<std::size_t, std::size_t> row_of;
  std::unordered_map<std::size_t, std::size_t> col_of;
  for (std::size_t i = 0; i < users.size(); ++i) row_of.emplace(users[i], i);
  for (std::size_t i = 0; i < items.size(); ++i) col_of.emplace(items[i], i);

  const std::size_t nr = users.size();
  const std::size_t nc = items.size();
  EstimateResult out;
  out.estimate = Matrix::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
  out.partitioned_rows = nr > nc;
  const std::size_t long_side = std::max(nr, nc);
  const std::size_t short_side = std::min(nr, nc);
  out.blocks = ceil_div(long_side, short_side);
  out.group_of.assign(long_side, 0);
  if (out.blocks > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, out.blocks - 1);
    for (auto& g : out.group_of) g = pick(rng);
  }

  // Position of each long-side index inside its group.
  std::vector<IndexSet> members(out.blocks);
  std::vector<std::size_t> slot(long_side);
  for (std::size_t i = 0; i < long_side; ++i) {
    slot[i] = members[out.group_of[i]].size();
    members[out.group_of[i]].push_back(i);
  }
  std::vector<std::vector<Observation>> block_obs(out.blocks);
  for (const Sample& s : samples) {
    auto r = row_of.find(s.user);
    auto c = col_of.find(s.item);
    if (r == row_of.end() || c == col_of.end()) throw ConfigError("observation outside the estimate's index sets");
    const std::size_t li = out.partitioned_rows ? r->second : c->second;
    const std::size_t si = out.partitioned_rows ? c->second : r->second;
    Observation o;
    if (out.partitioned_rows) {
      o = {slot[li], si, s.value};
    } else {
      o = {si, slot[li], s.value};
    }
    block_obs[out.group_of[li]].push_back(o);
  }

  for (std::size_t q = 0; q < out.blocks; ++q) {
    if (members[q].empty()) continue;
    if (block_obs[q].empty()) {
      ++out.empty_blocks;
      continue;
    }
    CompletionProblem prob;
    prob.nrows = out.partitioned_rows ? members[q].size() : short_side;
    prob.ncols = out.partitioned_rows ? short_side : members[q].size();
    prob.observed = std::move(block_obs[q]);
    prob.rank = rank;
    prob.sigma = sigma;
    const SolveResult res = solve_block(prob, cfg);
    out.converged = out.converged && res.converged;
    out.iterations += res.iterations;
    for (std::size_t m = 0; m < members[q].size(); ++m) {
      const auto li = static_cast<Eigen::Index>(members[q][m]);
      const auto mi = static_cast<Eigen::Index>(m);
      if (out.partitioned_rows)
        out.estimate.row(li) = res.estimate.row(mi);
      else
        out.estimate.col(li) = res.estimate.col(mi);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct Diagnostics {
  double mu_row = 1.0;
  double mu_col = 1.0;
  double kappa = 1.0;
  bool kappa_infinite = false;
  double tau = 1.0;
  /// Singular values of the C × N matrix of distinct cluster rows.
  std::vector<double> cluster_singular_values;

  double mu() const { return std::max(mu_row, mu_col); }
};

/// Incoherence, condition number and cluster-size ratio of a clustered reward matrix.
/// μ_col = (N/C)·max_j ‖V_j‖² for the right singular vectors of the distinct-row
/// matrix X; μ_row is the same quantity for the left singular vectors of P.
inline Diagnostics diagnostics(const Matrix& P, const IndexSet& cluster_of, std::size_t clusters) {
  if (clusters == 0 || cluster_of.size() != static_cast<std::size_t>(P.rows()))
    throw ConfigError("diagnostics needs one cluster id per row");
  Diagnostics d;
  std::vector<std::size_t> size(clusters, 0);
  std::vector<Eigen::Index> representative(clusters, -1);
  for (std::size_t u = 0; u < cluster_of.size(); ++u) {
    if (cluster_of[u] >= clusters) throw ConfigError("cluster id out of range");
    if (size[cluster_of[u]]++ == 0) representative[cluster_of[u]] = static_cast<Eigen::Index>(u);
  }
  const auto [lo, hi] = std::minmax_element(size.begin(), size.end());
  if (*lo == 0) throw ConfigError("empty cluster");
  d.tau = static_cast<double>(*hi) / static_cast<double>(*lo);

  Matrix X(static_cast<Eigen::Index>(clusters), P.cols());
  for (std::size_t c = 0; c < clusters; ++c) X.row(static_cast<Eigen::Index>(c)) = P.row(representative[c]);
  const ThinSvd sx = thin_svd(X);
  d.cluster_singular_values.assign(sx.s.data(), sx.s.data() + sx.s.size());
  const auto r = static_cast<Eigen::Index>(std::min<std::size_t>(clusters, sx.s.size()));
  const double top = sx.s.size() > 0 ? sx.s(0) : 0.0;
  const double bottom = r > 0 ? sx.s(r - 1) : 0.0;
  if (top <= 0.0 || bottom <= 1e-12 * top) {
    d.kappa_infinite = true;
    d.kappa = std::numeric_limits<double>::infinity();
  } else {
    d.kappa = top / bottom;
  }
  const double C = static_cast<double>(clusters);
  if (r > 0) {
    d.mu_col = static_cast<double>(P.cols()) / C * sx.V.leftCols(r).rowwise().squaredNorm().maxCoeff();
    const ThinSvd sp = thin_svd(P);
    const auto rp = std::min<Eigen::Index>(r, sp.s.size());
    d.mu_row = static_cast<double>(P.rows()) / C * sp.U.leftCols(rp).rowwise().squaredNorm().maxCoeff();
  }
  return d;
}

/// Spot check of subset strong convexity: smallest α̂ = σ_min(V_S)²·N/|S| over
/// `samples` random item subsets S of size ⌈γC⌉ (V from the distinct-row matrix).
/// Exhaustive verification over all subsets is exponential and not attempted.
inline double subset_convexity_spot_check(const Matrix& P, const IndexSet& cluster_of, std::size_t clusters,
                                          double gamma, std::size_t samples, Rng& rng) {
  std::vector<Eigen::Index> representative(clusters, -1);
  for (std::size_t u = 0; u < cluster_of.size(); ++u)
    if (representative[cluster_of[u]] < 0) representative[cluster_of[u]] = static_cast<Eigen::Index>(u);
  Matrix X(static_cast<Eigen::Index>(clusters), P.cols());
  for (std::size_t c = 0; c < clusters; ++c) X.row(static_cast<Eigen::Index>(c)) = P.row(representative[c]);
  const ThinSvd sx = thin_svd(X);
  const auto n = static_cast<std::size_t>(P.cols());
  const std::size_t size = std::min(n, static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(clusters))));
  IndexSet idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < samples; ++s) {
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix VS(static_cast<Eigen::Index>(size), sx.V.cols());
    for (std::size_t i = 0; i < size; ++i) VS.row(static_cast<Eigen::Index>(i)) = sx.V.row(static_cast<Eigen::Index>(idx[i]));
    const Vector sv = singular_values(VS);
    double smin = 0.0;
    for (Eigen::Index i = sv.size() - 1; i >= 0; --i)
      if (sv(i) > 1e-12) {
        smin = sv(i);
        break;
      }
    worst = std::min(worst, smin * smin * static_cast<double>(n) / static_cast<double>(size));
  }
  return worst;
}

}  // namespace bbandit
