#pragma once

#include <Eigen/Dense>

namespace spc {

enum class MatrixHint {
  General,
  PositiveSemidefinite,  // lets the solver compute only the retained eigenpairs
};

inline constexpr double kPinvRtol = 1e-10;

/// Moore-Penrose solve m^+ b through a symmetric eigendecomposition.
/// Eigenvalues below rtol * max|eigenvalue| are treated as zero.
/// Throws NonSymmetric when m deviates from symmetry by more than 1e-8.
Eigen::MatrixXd regularized_pinv_solve(const Eigen::MatrixXd& m, const Eigen::MatrixXd& b,
                                       MatrixHint hint = MatrixHint::General,
                                       double rtol = kPinvRtol);

/// Pseudo-inverse itself (small matrices only).
Eigen::MatrixXd pinv_symmetric(const Eigen::MatrixXd& m, double rtol = kPinvRtol);

/// Eigenvalues in ascending order (LAPACK dsyevd).
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m);

/// Pin BLAS/LAPACK to a single thread so results do not depend on the host.
void configure_blas_threads();

}  // namespace spc
