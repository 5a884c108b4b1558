#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace spc {

struct GaussianKernelParams {
  double bandwidth = 1.0;  // kappa, scale of squared distance
};

/// exp(-||v - v'||^2 / kappa).
double kernel_eval(const Eigen::VectorXd& v, const Eigen::VectorXd& v_prime,
                   const GaussianKernelParams& params);

/// Symmetric m x m Gram matrix over the rows of `rows`.
Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& rows, const GaussianKernelParams& params);

/// Rectangular kernel matrix K(a_i, b_j).
Eigen::MatrixXd cross_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const GaussianKernelParams& params);

/// Median of pairwise squared distances (all pairs when there are at most
/// 1000, otherwise 1000 seeded random pairs).
double median_heuristic_bandwidth(const Eigen::MatrixXd& rows, std::uint64_t seed = 0);

/// Per-column centering and scaling fitted on training rows.
/// Columns with zero sample SD are dropped.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  std::vector<Eigen::Index> kept;
  Eigen::Index input_dim = 0;

  static Standardizer fit(const Eigen::MatrixXd& rows);
  static Standardizer identity(Eigen::Index dim);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
  Eigen::Index output_dim() const { return static_cast<Eigen::Index>(kept.size()); }
};

}  // namespace spc
