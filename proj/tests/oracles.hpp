#pragma once

// Independent reference computations shared by the test binaries.

#include "bbandit/bbandit.hpp"

#include <limits>

namespace bbandit::oracle {

inline Instance from_means(const Matrix& P, std::size_t T, std::size_t B) {
  Instance inst;
  inst.users = static_cast<std::size_t>(P.rows());
  inst.items = static_cast<std::size_t>(P.cols());
  inst.horizon = T;
  inst.budget = B;
  inst.clusters = 1;
  inst.cluster_of.assign(inst.users, 0);
  inst.P = P;
  inst.noise = NoiseModel::gaussian(0.0);
  inst.validate();
  return inst;
}

/// Rank-r matrix U Vᵀ with random-sign factors scaled so entries are O(1).
inline Matrix random_sign_low_rank(std::size_t n, std::size_t m, std::size_t r, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  Matrix U(n, r), V(m, r);
  for (Eigen::Index i = 0; i < U.size(); ++i) U.data()[i] = coin(rng) ? 1.0 : -1.0;
  for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] = coin(rng) ? 1.0 : -1.0;
  return U * V.transpose() / std::sqrt(static_cast<double>(r));
}

inline CompletionProblem masked(const Matrix& Z, double p, double sigma, Rng& rng) {
  CompletionProblem prob;
  prob.nrows = static_cast<std::size_t>(Z.rows());
  prob.ncols = static_cast<std::size_t>(Z.cols());
  prob.sigma = sigma;
  std::bernoulli_distribution keep(p);
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
      if (keep(rng))
        prob.observed.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                                 Z(i, j) + (sigma > 0.0 ? noise(rng) : 0.0)});
  return prob;
}

struct FactoredSolution {
  double objective = 0.0;
  Matrix Q;
};

/// Independent reference: the factored objective ½‖P_Ω(ABᵀ − Z)‖² + λ/2(‖A‖² + ‖B‖²) with
/// full-width factors has the same minimum value as the nuclear-norm program. Solved by
/// gradient descent with backtracking until the gradient vanishes.
inline FactoredSolution burer_monteiro_min(const CompletionProblem& prob, double lambda) {
  const auto n = static_cast<Eigen::Index>(prob.nrows);
  const auto m = static_cast<Eigen::Index>(prob.ncols);
  const Eigen::Index k = std::min(n, m);
  Eigen::ArrayXXd mask = Eigen::ArrayXXd::Zero(n, m), Z = Eigen::ArrayXXd::Zero(n, m);
  for (const auto& o : prob.observed) {
    mask(static_cast<Eigen::Index>(o.row), static_cast<Eigen::Index>(o.col)) = 1.0;
    Z(static_cast<Eigen::Index>(o.row), static_cast<Eigen::Index>(o.col)) = o.value;
  }
  Rng rng(99);
  std::normal_distribution<double> g(0.0, 0.1);
  Matrix A(n, k), B(m, k);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = g(rng);
  auto value = [&](const Matrix& a, const Matrix& b) {
    const Eigen::ArrayXXd R = mask * ((a * b.transpose()).array() - Z);
    return 0.5 * R.square().sum() + 0.5 * lambda * (a.squaredNorm() + b.squaredNorm());
  };
  double step = 0.05;
  double f = value(A, B);
  for (int it = 0; it < 400000; ++it) {
    const Matrix R = (mask * ((A * B.transpose()).array() - Z)).matrix();
    const Matrix gA = R * B + lambda * A;
    const Matrix gB = R.transpose() * A + lambda * B;
    const double gn = std::sqrt(gA.squaredNorm() + gB.squaredNorm());
    if (gn < 1e-10) break;
    Matrix A2 = A - step * gA, B2 = B - step * gB;
    double f2 = value(A2, B2);
    while (f2 > f - 0.5 * step * gn * gn && step > 1e-8) {
      step *= 0.5;
      A2 = A - step * gA;
      B2 = B - step * gB;
      f2 = value(A2, B2);
    }
    A = std::move(A2);
    B = std::move(B2);
    f = f2;
    step = std::min(step * 1.2, 1.0);
  }
  return {f, A * B.transpose()};
}

/// Best total mean reward of one user over all sequences of T items using each at most B times.
inline double best_schedule(const std::vector<double>& means, std::size_t T, std::size_t B, std::vector<std::size_t>& used) {
  if (T == 0) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < means.size(); ++j) {
    if (used[j] >= B) continue;
    ++used[j];
    best = std::max(best, means[j] + best_schedule(means, T - 1, B, used));
    --used[j];
  }
  return best;
}

inline double brute_force_total(const Instance& inst) {
  const Matrix mean = mean_reward_matrix(inst);
  double total = 0.0;
  for (std::size_t u = 0; u < inst.users; ++u) {
    std::vector<double> row(inst.items);
    for (std::size_t j = 0; j < inst.items; ++j) row[j] = mean(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j));
    std::vector<std::size_t> used(inst.items, 0);
    total += best_schedule(row, inst.horizon, inst.budget, used);
  }
  return total;
}

inline double total_mean_reward(const RegretTrace& tr, const Instance& inst) {
  const Matrix mean = mean_reward_matrix(inst);
  double s = 0.0;
  for (const RoundLog& r : tr.rounds)
    for (std::size_t u = 0; u < tr.users; ++u) s += mean(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(r.items[u]));
  return s;
}

}  // namespace bbandit::oracle
