#include "spc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <lapacke.h>

#include "spc/error.hpp"

extern "C" void openblas_set_num_threads(int num_threads);

namespace spc {

namespace {

void check_symmetric(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) fail(ErrorCode::DimensionMismatch, "matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * scale) fail(ErrorCode::NonSymmetric, "matrix is not symmetric");
}

struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

EigenPairs full_eigen(const Eigen::MatrixXd& m) {
  const auto n = static_cast<lapack_int>(m.rows());
  EigenPairs out;
  out.vectors = m;
  out.values.resize(n);
  lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, out.vectors.data(), n, out.values.data());
  if (info == 0) return out;
  // Divide-and-conquer occasionally fails on badly scaled input; retry with MRRR, then QR.
  Eigen::MatrixXd work = m;
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'A', 'L', n, work.data(), n, 0.0, 0.0, 0, 0, 0.0, &found,
                        out.values.data(), out.vectors.data(), n, support.data());
  if (info == 0 && found == n) return out;
  out.vectors = m;
  info = LAPACKE_dsyev(LAPACK_COL_MAJOR, 'V', 'L', n, out.vectors.data(), n, out.values.data());
  if (info != 0) fail(ErrorCode::NumericalFailure, "symmetric eigendecomposition did not converge");
  return out;
}

// Eigenpairs with eigenvalue above `lower`; `upper` must bound the spectrum.
EigenPairs partial_eigen(const Eigen::MatrixXd& m, double lower, double upper) {
  const auto n = static_cast<lapack_int>(m.rows());
  Eigen::MatrixXd work = m;
  Eigen::VectorXd values(n);
  Eigen::MatrixXd vectors(n, n);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info =
      LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'V', 'L', n, work.data(), n, lower, upper, 0, 0, 0.0,
                     &found, values.data(), vectors.data(), n, support.data());
  if (info != 0) {
    EigenPairs all = full_eigen(m);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < all.values.size(); ++i) {
      if (all.values[i] > lower) keep.push_back(i);
    }
    EigenPairs out;
    out.values.resize(static_cast<Eigen::Index>(keep.size()));
    out.vectors.resize(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      out.values[static_cast<Eigen::Index>(k)] = all.values[keep[k]];
      out.vectors.col(static_cast<Eigen::Index>(k)) = all.vectors.col(keep[k]);
    }
    return out;
  }
  EigenPairs out;
  out.values = values.head(found);
  out.vectors = vectors.leftCols(found);
  return out;
}

// Rayleigh quotient after a few power steps: a lower bound on the top eigenvalue of a PSD matrix.
double top_eigenvalue_lower_bound(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m.rows());
  double rq = 0.0;
  for (int it = 0; it < 8; ++it) {
    const Eigen::VectorXd mv = m * v;
    const double nv = v.squaredNorm();
    if (nv == 0.0) break;
    rq = std::max(rq, v.dot(mv) / nv);
    const double norm = mv.norm();
    if (norm == 0.0) break;
    v = mv / norm;
  }
  return rq;
}

Eigen::MatrixXd apply_truncated(const EigenPairs& e, const Eigen::MatrixXd& b, double rtol) {
  if (e.values.size() == 0) return Eigen::MatrixXd::Zero(b.rows(), b.cols());
  const double top = e.values.cwiseAbs().maxCoeff();
  const double cut = rtol * top;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    if (std::abs(e.values[i]) > cut && top > 0.0) keep.push_back(i);
  }
  if (keep.empty()) return Eigen::MatrixXd::Zero(b.rows(), b.cols());
  Eigen::MatrixXd u(e.vectors.rows(), static_cast<Eigen::Index>(keep.size()));
  Eigen::VectorXd inv(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    u.col(static_cast<Eigen::Index>(k)) = e.vectors.col(keep[k]);
    inv[static_cast<Eigen::Index>(k)] = 1.0 / e.values[keep[k]];
  }
  const Eigen::MatrixXd coeff = inv.asDiagonal() * (u.transpose() * b);
  return u * coeff;
}

}  // namespace

Eigen::MatrixXd regularized_pinv_solve(const Eigen::MatrixXd& m, const Eigen::MatrixXd& b,
                                       MatrixHint hint, double rtol) {
  check_symmetric(m);
  if (b.rows() != m.rows()) fail(ErrorCode::DimensionMismatch, "right-hand side rows differ from matrix size");
  if (m.rows() == 0) return b;
  if (!m.allFinite() || !b.allFinite()) fail(ErrorCode::NonFiniteValue, "non-finite entry in linear system");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  if (hint == MatrixHint::PositiveSemidefinite && m.rows() > 64) {
    const double lb = top_eigenvalue_lower_bound(sym);
    if (lb > 0.0) {
      // Gershgorin bound caps the spectrum from above.
      const double ub = sym.cwiseAbs().rowwise().sum().maxCoeff() * 1.01 + 1.0;
      return apply_truncated(partial_eigen(sym, rtol * lb * 0.5, ub), b, rtol);
    }
  }
  return apply_truncated(full_eigen(sym), b, rtol);
}

Eigen::MatrixXd pinv_symmetric(const Eigen::MatrixXd& m, double rtol) {
  return regularized_pinv_solve(m, Eigen::MatrixXd::Identity(m.rows(), m.rows()), MatrixHint::General,
                                rtol);
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m) {
  check_symmetric(m);
  const auto n = static_cast<lapack_int>(m.rows());
  Eigen::MatrixXd work = 0.5 * (m + m.transpose());
  Eigen::VectorXd values(n);
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', n, work.data(), n, values.data());
  if (info != 0) fail(ErrorCode::NumericalFailure, "symmetric eigendecomposition did not converge");
  return values;
}

void configure_blas_threads() { openblas_set_num_threads(1); }

}  // namespace spc
