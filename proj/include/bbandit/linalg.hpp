#pragma once

#include "bbandit/core.hpp"

#ifdef BBANDIT_USE_LAPACKE
#include <lapacke.h>
#endif

namespace bbandit {

struct ThinSvd {
  Matrix U;  // rows × k
  Vector s;  // k, descending
  Matrix V;  // cols × k
};

/// Thin SVD. Uses LAPACK's divide-and-conquer driver when available and falls
/// back to Eigen's BDCSVD otherwise (or if LAPACK reports a failure).
inline ThinSvd thin_svd(const Matrix& A) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  const Eigen::Index k = std::min(m, n);
  ThinSvd out;
  if (k == 0) {
    out.U.resize(m, 0);
    out.s.resize(0);
    out.V.resize(n, 0);
    return out;
  }
#ifdef BBANDIT_USE_LAPACKE
  {
    Matrix work = A;
    Matrix U(m, k);
    Matrix VT(k, n);
    Vector s(k);
    const lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', static_cast<lapack_int>(m),
                                           static_cast<lapack_int>(n), work.data(), static_cast<lapack_int>(m),
                                           s.data(), U.data(), static_cast<lapack_int>(m), VT.data(),
                                           static_cast<lapack_int>(k));
    if (info == 0) {
      out.U = std::move(U);
      out.s = std::move(s);
      out.V = VT.transpose();
      return out;
    }
  }
#endif
  Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.U = svd.matrixU();
  out.s = svd.singularValues();
  out.V = svd.matrixV();
  return out;
}

inline Vector singular_values(const Matrix& A) {
  if (A.size() == 0) return Vector(0);
  return Eigen::BDCSVD<Matrix>(A).singularValues();
}

/// Number of singular values above `rel_tol` times the largest.
inline std::size_t numerical_rank(const Matrix& A, double rel_tol = 1e-8) {
  const Vector s = singular_values(A);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

}  // namespace bbandit
