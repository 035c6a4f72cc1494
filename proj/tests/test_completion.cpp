#include "bbandit/bbandit.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

using namespace bbandit;
using namespace bbandit::oracle;

namespace {

/// Subgradient optimality of Q for ½‖P_Ω(Q − Z)‖² + λ‖Q‖_*: with G = P_Ω(Z − Q) and the
/// compact SVD Q = U S Vᵀ, G = λ(UVᵀ + W) where W ⟂ U, V and ‖W‖₂ ≤ 1.
struct KktGap {
  double tangent = 0.0;  // ‖Uᵀ G − λ Vᵀ‖ + ‖G V − λ U‖
  double normal = 0.0;   // ‖(I − UUᵀ) G (I − VVᵀ)‖₂ / λ
};

KktGap kkt_gap(const Matrix& Q, const CompletionProblem& prob, double lambda) {
  Matrix G = Matrix::Zero(Q.rows(), Q.cols());
  for (const auto& o : prob.observed) {
    const auto i = static_cast<Eigen::Index>(o.row), j = static_cast<Eigen::Index>(o.col);
    G(i, j) = o.value - Q(i, j);
  }
  Eigen::JacobiSVD<Matrix> svd(Q, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::Index r = 0;
  const double top = svd.singularValues()(0);
  while (r < svd.singularValues().size() && svd.singularValues()(r) > 1e-6 * std::max(top, 1.0)) ++r;
  const Matrix U = svd.matrixU().leftCols(r), V = svd.matrixV().leftCols(r);
  KktGap gap;
  gap.tangent = (U.transpose() * G - lambda * V.transpose()).norm() + (G * V - lambda * U).norm();
  const Matrix In = Matrix::Identity(Q.rows(), Q.rows()), Im = Matrix::Identity(Q.cols(), Q.cols());
  const Matrix W = (In - U * U.transpose()) * G * (Im - V * V.transpose());
  Eigen::JacobiSVD<Matrix> ws(W);
  gap.normal = ws.singularValues()(0) / lambda;
  return gap;
}

}  // namespace

TEST(SolveBlock, FullObservationNoiselessRecoversExactly) {
  Rng rng(1);
  const Matrix Z = random_sign_low_rank(15, 12, 1, rng);
  CompletionProblem prob = masked(Z, 1.0, 0.0, rng);
  const SolveResult res = solve_block(prob, SolverConfig{});
  EXPECT_EQ(res.lambda, 0.0);
  EXPECT_LE((res.estimate - Z).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveBlock, HugeLambdaGivesZero) {
  Rng rng(2);
  const Matrix Z = random_sign_low_rank(10, 10, 2, rng);
  CompletionProblem prob = masked(Z, 0.6, 0.1, rng);
  SolverConfig cfg;
  cfg.c_lambda = 1e6;
  EXPECT_EQ(solve_block(prob, cfg).estimate.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SolveBlock, LambdaFormula) {
  CompletionProblem prob;
  prob.nrows = 4;
  prob.ncols = 9;
  prob.sigma = 0.5;
  for (std::size_t j = 0; j < 9; ++j) prob.observed.push_back({j % 4, j, 1.0});
  prob.observed.push_back({0, 0, 3.0});  // duplicate is merged
  SolverConfig cfg;
  EXPECT_NEAR(completion_lambda(prob, cfg), 2.0 * 0.5 * std::sqrt(9.0 / 9.0), 1e-15);
  cfg.lambda_override = 0.7;
  EXPECT_EQ(completion_lambda(prob, cfg), 0.7);
}

TEST(SolveBlock, MatchesFactoredOracleAndSatisfiesKkt) {
  Rng rng(20);
  const Matrix Z = random_sign_low_rank(20, 20, 2, rng);
  CompletionProblem prob = masked(Z, 0.5, 0.01, rng);
  SolverConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iters = 20000;
  const SolveResult res = solve_block(prob, cfg);
  ASSERT_TRUE(res.converged);
  const FactoredSolution oracle = burer_monteiro_min(prob, res.lambda);
  EXPECT_NEAR(res.objective, oracle.objective, 1e-3);
  EXPECT_LE((res.estimate - oracle.Q).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_NEAR(res.objective, completion_objective(res.estimate, prob.observed, res.lambda), 1e-9);
  const KktGap gap = kkt_gap(res.estimate, prob, res.lambda);
  EXPECT_LT(gap.tangent, 1e-4);
  EXPECT_LE(gap.normal, 1.0 + 1e-4);
}

TEST(SolveBlock, ObjectiveNeverIncreases) {
  for (bool accelerate : {true, false}) {
    Rng rng(5);
    const Matrix Z = random_sign_low_rank(30, 25, 3, rng);
    CompletionProblem prob = masked(Z, 0.4, 0.2, rng);
    SolverConfig cfg;
    cfg.record_objective = true;
    cfg.accelerate = accelerate;
    const SolveResult res = solve_block(prob, cfg);
    ASSERT_FALSE(res.objective_trace.empty());
    double prev = 0.5 * [&] {
      double s = 0.0;
      for (const auto& o : prob.observed) s += o.value * o.value;
      return s;
    }();
    for (double f : res.objective_trace) {
      EXPECT_LE(f, prev + 1e-12 * std::max(1.0, prev));
      prev = f;
    }
    EXPECT_EQ(res.monotonicity_violations, 0);
  }
}

TEST(SolveBlock, OutputRankBoundedBySoftThreshold) {
  Rng rng(6);
  const Matrix Z = random_sign_low_rank(25, 25, 2, rng);
  CompletionProblem prob = masked(Z, 0.5, 0.3, rng);
  const SolveResult res = solve_block(prob, SolverConfig{});
  EXPECT_LE(numerical_rank(res.estimate, 1e-8), 25u);
  EXPECT_LT(numerical_rank(res.estimate, 1e-8), 25u);
}

TEST(SolveBlock, RejectsBadInput) {
  CompletionProblem prob;
  prob.nrows = 2;
  prob.ncols = 2;
  EXPECT_THROW(solve_block(prob, SolverConfig{}), ConfigError);
  prob.observed.push_back({2, 0, 1.0});
  EXPECT_THROW(solve_block(prob, SolverConfig{}), ConfigError);
  prob.observed = {{0, 0, 1.0}};
  SolverConfig cfg;
  cfg.step = 1.5;
  EXPECT_THROW(solve_block(prob, cfg), ConfigError);
}

TEST(Estimate, PartitionCounts) {
  Rng rng(1);
  std::vector<Sample> s{{0, 0, 1.0}};
  const auto r = estimate(all_indices(4), all_indices(10), 0.1, 1, s, SolverConfig{}, rng);
  EXPECT_EQ(r.blocks, 3u);
  EXPECT_FALSE(r.partitioned_rows);
  const auto q = estimate(all_indices(6), all_indices(6), 0.1, 1, s, SolverConfig{}, rng);
  EXPECT_EQ(q.blocks, 1u);
  const auto t = estimate(all_indices(9), all_indices(2), 0.1, 1, s, SolverConfig{}, rng);
  EXPECT_EQ(t.blocks, 5u);
  EXPECT_TRUE(t.partitioned_rows);
}

TEST(Estimate, FullNoiselessObservationIsExact) {
  Rng rng(3);
  const Matrix Z = random_sign_low_rank(12, 30, 2, rng);
  std::vector<Sample> s;
  for (std::size_t u = 0; u < 12; ++u)
    for (std::size_t j = 0; j < 30; ++j) s.push_back({u, j, Z(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j))});
  const auto r = estimate(all_indices(12), all_indices(30), 0.0, 2, s, SolverConfig{}, rng);
  EXPECT_LE((r.estimate - Z).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Estimate, SubsetCoordinates) {
  Rng rng(4);
  const IndexSet users{7, 2, 5};
  const IndexSet items{10, 3, 8};
  std::vector<Sample> s;
  for (std::size_t u : users)
    for (std::size_t j : items) s.push_back({u, j, static_cast<double>(u) + 0.0 * static_cast<double>(j)});
  const auto r = estimate(users, items, 0.0, 1, s, SolverConfig{}, rng);
  for (std::size_t a = 0; a < users.size(); ++a)
    for (std::size_t b = 0; b < items.size(); ++b)
      EXPECT_NEAR(r.estimate(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)), static_cast<double>(users[a]),
                  1e-6);
}

TEST(Estimate, RejectsSamplesOutsideTheSets) {
  Rng rng(4);
  std::vector<Sample> s{{0, 0, 1.0}, {99, 0, 1.0}};
  EXPECT_THROW(estimate(all_indices(2), all_indices(2), 0.0, 1, s, SolverConfig{}, rng), std::exception);
}

TEST(Estimate, EquivariantUnderRelabeling) {
  Rng gen(8);
  const std::size_t n = 20;
  const Matrix Z = random_sign_low_rank(n, n, 2, gen);
  std::vector<Sample> s;
  std::bernoulli_distribution keep(0.5);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t j = 0; j < n; ++j)
      if (keep(gen)) s.push_back({u, j, Z(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j))});
  IndexSet pu = all_indices(n), pi = all_indices(n);
  std::shuffle(pu.begin(), pu.end(), gen);
  std::shuffle(pi.begin(), pi.end(), gen);
  std::vector<Sample> relabeled;
  for (const Sample& x : s) relabeled.push_back({pu[x.user], pi[x.item], x.value});
  Rng r1(5), r2(5);
  const auto a = estimate(all_indices(n), all_indices(n), 0.05, 2, s, SolverConfig{}, r1);
  const auto b = estimate(all_indices(n), all_indices(n), 0.05, 2, relabeled, SolverConfig{}, r2);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t j = 0; j < n; ++j)
      EXPECT_NEAR(a.estimate(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j)),
                  b.estimate(static_cast<Eigen::Index>(pu[u]), static_cast<Eigen::Index>(pi[j])), 1e-6);
}

TEST(Estimate, SparseErrorWithinFiveTimesFullReference) {
  double full = 0.0, sparse = 0.0;
  for (int seed = 0; seed < 3; ++seed) {
    Rng rng(100 + seed);
    const Matrix Z = random_sign_low_rank(100, 100, 2, rng);
    for (double p : {1.0, 0.3}) {
      CompletionProblem prob = masked(Z, p, 0.01, rng);
      std::vector<Sample> s;
      for (const auto& o : prob.observed) s.push_back({o.row, o.col, o.value});
      const auto r = estimate(all_indices(100), all_indices(100), 0.01, 2, s, SolverConfig{}, rng);
      (p == 1.0 ? full : sparse) += (r.estimate - Z).cwiseAbs().maxCoeff();
    }
  }
  EXPECT_LE(sparse, 5.0 * full);
}

TEST(Diagnostics, SingleClusterKappaOne) {
  Matrix P = Matrix::Constant(5, 7, 0.4);
  const Diagnostics d = diagnostics(P, IndexSet(5, 0), 1);
  EXPECT_NEAR(d.kappa, 1.0, 1e-12);
  EXPECT_NEAR(d.tau, 1.0, 1e-12);
}

TEST(Diagnostics, SpikeAttainsMaximalColumnIncoherence) {
  Matrix P = Matrix::Zero(4, 9);
  P.col(3).setConstant(2.0);
  const Diagnostics d = diagnostics(P, IndexSet(4, 0), 1);
  EXPECT_NEAR(d.mu_col, 9.0, 1e-9);
}

TEST(Diagnostics, KappaMatchesDirectSvd) {
  Rng rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t C = 3, N = 40;
  Matrix X(C, N);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = g(rng);
  Matrix P(6, N);
  IndexSet cluster_of(6);
  for (std::size_t u = 0; u < 6; ++u) {
    cluster_of[u] = u % C;
    P.row(static_cast<Eigen::Index>(u)) = X.row(static_cast<Eigen::Index>(u % C));
  }
  Eigen::JacobiSVD<Matrix> svd(X);
  const auto& s = svd.singularValues();
  const Diagnostics d = diagnostics(P, cluster_of, C);
  EXPECT_NEAR(d.kappa, s(0) / s(C - 1), 1e-9);
  EXPECT_LT(d.kappa, 2.0);
  EXPECT_NEAR(d.tau, 1.0, 1e-12);
}

TEST(Diagnostics, SubsetSpotCheckPositiveForGenericV) {
  Rng rng(2);
  const Instance inst = generate_instance(GeneratorSpec::d1(0.2), 3);
  EXPECT_GT(subset_convexity_spot_check(inst.P, inst.cluster_of, inst.clusters, 2.0, 100, rng), 0.0);
}

TEST(Svd, ThinSvdReconstructs) {
  Rng rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix A(7, 4);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = g(rng);
  const ThinSvd s = thin_svd(A);
  EXPECT_LE((s.U * s.s.asDiagonal() * s.V.transpose() - A).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 1; i < s.s.size(); ++i) EXPECT_GE(s.s(i - 1), s.s(i));
}
