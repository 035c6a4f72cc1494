#pragma once

// Lloyd's k-means with farthest-point seeding, restarts and an elbow rule for k.

#include "bbandit/core.hpp"

#include <limits>
#include <vector>

namespace bbandit {

struct KMeansConfig {
  int max_iters = 100;
  int restarts = 5;
  /// Stop growing k once SSE(k+1) improves on SSE(k) by less than this fraction of SSE(1).
  double elbow_threshold = 0.1;
};

struct KMeansResult {
  std::size_t k = 0;
  std::vector<std::size_t> label;
  Matrix centers;  // k × dim
  double sse = 0.0;
  /// SSE after the seeding step and after every Lloyd iteration (best restart).
  std::vector<double> sse_trace;
};

namespace detail {

inline double sse_of(const Matrix& X, const Matrix& centers, std::vector<std::size_t>& label) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (X.row(i) - centers.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<std::size_t>(c);
      }
    }
    label[static_cast<std::size_t>(i)] = arg;
    total += best;
  }
  return total;
}

}  // namespace detail

/// One k-means fit on the rows of X. Each restart seeds with a random point and
/// then repeatedly the point farthest from the chosen centers.
inline KMeansResult kmeans(const Matrix& X, std::size_t k, const KMeansConfig& cfg, Rng& rng) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (k == 0 || k > n) throw ConfigError("k-means needs 1 <= k <= number of points");
  KMeansResult best;
  best.sse = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
    KMeansResult cur;
    cur.k = k;
    cur.label.assign(n, 0);
    cur.centers.resize(static_cast<Eigen::Index>(k), X.cols());
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::size_t c = 0; c < k; ++c) {
      cur.centers.row(static_cast<Eigen::Index>(c)) = X.row(static_cast<Eigen::Index>(pick));
      double far = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        dist[i] = std::min(dist[i], (X.row(static_cast<Eigen::Index>(i)) - cur.centers.row(static_cast<Eigen::Index>(c))).squaredNorm());
        if (dist[i] > far) {
          far = dist[i];
          pick = i;
        }
      }
    }
    cur.sse = detail::sse_of(X, cur.centers, cur.label);
    cur.sse_trace.push_back(cur.sse);
    for (int it = 0; it < cfg.max_iters; ++it) {
      Matrix sum = Matrix::Zero(cur.centers.rows(), X.cols());
      std::vector<std::size_t> count(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        sum.row(static_cast<Eigen::Index>(cur.label[i])) += X.row(static_cast<Eigen::Index>(i));
        ++count[cur.label[i]];
      }
      for (std::size_t c = 0; c < k; ++c)
        if (count[c] > 0) cur.centers.row(static_cast<Eigen::Index>(c)) = sum.row(static_cast<Eigen::Index>(c)) / static_cast<double>(count[c]);
      const auto before = cur.label;
      cur.sse = detail::sse_of(X, cur.centers, cur.label);
      cur.sse_trace.push_back(cur.sse);
      if (cur.label == before) break;
    }
    if (cur.sse < best.sse) best = std::move(cur);
  }
  return best;
}

/// Fits k = 1, 2, ... up to `k_max` and keeps the smallest k after which one more
/// cluster no longer lowers the SSE by `elbow_threshold` times the one-cluster SSE.
inline KMeansResult kmeans_elbow(const Matrix& X, std::size_t k_max, const KMeansConfig& cfg, Rng& rng) {
  const auto n = static_cast<std::size_t>(X.rows());
  k_max = std::max<std::size_t>(1, std::min(k_max, n));
  KMeansResult chosen = kmeans(X, 1, cfg, rng);
  const double scale = std::max(chosen.sse, 1e-300);
  for (std::size_t k = 2; k <= k_max; ++k) {
    if (chosen.sse <= 1e-12 * scale || chosen.sse == 0.0) break;
    KMeansResult next = kmeans(X, k, cfg, rng);
    if (chosen.sse - next.sse < cfg.elbow_threshold * scale) break;
    chosen = std::move(next);
  }
  return chosen;
}

}  // namespace bbandit
