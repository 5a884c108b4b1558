#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "spc/data_model.hpp"

namespace spc {

/// Which pre-period proxy column plays the role of the baseline outcome.
struct PrePeriodSelector {
  enum class Kind { Latest, Average, Index };
  Kind kind = Kind::Latest;
  Eigen::Index index = 0;  // zero-based, for Kind::Index

  static PrePeriodSelector latest() { return {}; }
  static PrePeriodSelector average() { return {Kind::Average, 0}; }
  static PrePeriodSelector column(Eigen::Index j) { return {Kind::Index, j}; }
  /// "latest", "average", or a one-based column number.
  static PrePeriodSelector parse(const std::string& text);
};

Eigen::VectorXd select_pre_period(const Dataset& data, const PrePeriodSelector& selector);

struct DidResult {
  double psi_hat = 0.0;
  double se = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
  Eigen::VectorXd influence_values;
};

/// Difference in mean (Y - W~) between arms; SE from the two-sample influence values.
DidResult did_estimate(const Dataset& data, const PrePeriodSelector& selector = {}, double alpha_level = 0.05);

struct CocaOlsFit {
  Eigen::VectorXd beta;  // (intercept, A, Y, X...)
  Eigen::MatrixXd vhat;
  double sigma2 = 0.0;
  double psi_hat = 0.0;
  double se = 0.0;
  bool unstable = false;  // |beta_3| below 1e-8

  std::pair<double, double> ci(double alpha_level) const;
};

inline constexpr double kNearZeroBeta3 = 1e-8;

struct OlsFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd vhat;
  double sigma2 = 0.0;
};

/// Ordinary least squares with the classical covariance sigma^2 (Z'Z)^{-1},
/// sigma^2 = RSS / (n - p). Throws RankDeficientDesign.
OlsFit ols(const Eigen::MatrixXd& z, const Eigen::VectorXd& target);

/// Delta-method SE of -b2/b3 given the coefficient covariance.
double coca_delta_se(const Eigen::VectorXd& beta, const Eigen::MatrixXd& vhat);

/// Regression of the single proxy on (1, A, Y, X); psi = -beta_A / beta_Y.
CocaOlsFit coca_ols_oneshot(const Dataset& data);

struct CocaGridResult {
  std::vector<double> grid;
  std::vector<double> wald;  // |t| of the A coefficient per grid value
  std::vector<double> accepted;
};

/// Confidence set of psi values where the A-coefficient of W on (1, A, Y - psi A, X) is not rejected.
CocaGridResult coca_grid_search(const Dataset& data, const std::vector<double>& psi_grid, double alpha_level = 0.05);

}  // namespace spc
