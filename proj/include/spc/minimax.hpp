#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spc/data_model.hpp"
#include "spc/kernels.hpp"

namespace spc {

/// min_f max_g  P[g(V_g){S - D f(V_f)} - g(V_g)^2] - lambda_g ||g||^2 + lambda_f ||f||^2
/// over Gaussian-kernel RKHS balls.
struct MinimaxProblem {
  Eigen::VectorXd s;
  Eigen::VectorXd d;
  Eigen::MatrixXd v_f;
  Eigen::MatrixXd v_g;
  double lambda_f = 1e-4;
  double lambda_g = 1e-4;
  double kappa_f = 1.0;
  double kappa_g = 1.0;
};

/// f(v) = sum_i gamma_i K(anchor_i, v), with anchors and queries passed
/// through the fit-time standardizer first.
struct KernelFunctionEstimate {
  Eigen::MatrixXd anchors;
  Eigen::VectorXd gamma;
  std::vector<Eigen::Index> support;  // rows of the training units used as anchors
  GaussianKernelParams kernel;
  Standardizer standardizer;

  // Adversary side, kept for validation risks on new data.
  GaussianKernelParams adversary_kernel;
  Standardizer adversary_standardizer;
  double lambda_f = 0.0;
  double lambda_g = 0.0;

  Eigen::VectorXd evaluate(const Eigen::MatrixXd& rows) const;
};

/// K ~ L L' by greedy diagonal pivoting, stopping once every residual
/// diagonal entry is at most `tol`. Rows of L at the pivots form a lower
/// triangular block.
struct LowRankFactor {
  Eigen::MatrixXd l;
  std::vector<Eigen::Index> pivots;
  Eigen::Index rank() const { return l.cols(); }
};

LowRankFactor pivoted_cholesky(const Eigen::MatrixXd& rows, const GaussianKernelParams& kernel, double tol);

inline constexpr double kLowRankTol = 1e-12;

/// Closed-form representer solution, computed on pivoted-Cholesky factors of
/// both Gram matrices; the returned expansion uses the pivot units only.
KernelFunctionEstimate solve_minimax(const MinimaxProblem& p);

/// (1/M^2) e' Gamma e + lambda_f ||f||^2 with e = s - d * f(v_f); the outer
/// objective after maximizing out the adversary, using the exact Gram matrix.
double minimax_profile_objective(const MinimaxProblem& p, const KernelFunctionEstimate& est);

/// How a nuisance moment problem is built from units.
struct MinimaxRoles {
  std::string name;
  std::function<Eigen::VectorXd(const Dataset&)> s;
  std::function<Eigen::VectorXd(const Dataset&)> d;
  std::function<Eigen::MatrixXd(const Dataset&)> v_f;
  std::function<Eigen::MatrixXd(const Dataset&)> v_g;
};

/// S = A, D = 1 - A, V_f = (Y, X), V_g = (W, X).
MinimaxRoles odds_roles();
/// S = (1 - A) Y, D = 1 - A, V_f = (W, X), V_g = (Y, X).
MinimaxRoles bridge_roles();
/// S = A, D = (1 - A) * pilot(Y, X), V_f = (Y, X), V_g = (W, X).
MinimaxRoles ratio_roles(UnitFunction pilot);

struct MinimaxHyper {
  double lambda_f = 1e-4;
  double lambda_g = 1e-4;
  double kappa_f = 1.0;  // absolute, on standardized inputs
  double kappa_g = 1.0;
};

/// Hyperparameters with bandwidths expressed as multiples of the median heuristic.
struct RelativeHyper {
  double lambda_f = 1e-4;
  double lambda_g = 1e-4;
  double kappa_f_mult = 1.0;
  double kappa_g_mult = 1.0;
};

struct BandwidthScale {
  double f = 1.0;
  double g = 1.0;
};

/// Median-heuristic bandwidths of the standardized V_f and V_g columns.
BandwidthScale median_bandwidths(const Dataset& fold, const MinimaxRoles& roles, std::uint64_t seed);

MinimaxHyper resolve(const RelativeHyper& rel, const BandwidthScale& scale);

/// Standardizes V_f and V_g on `fold`, then solves.
KernelFunctionEstimate fit_minimax(const Dataset& fold, const MinimaxRoles& roles, const MinimaxHyper& hyper);

KernelFunctionEstimate fit_odds_weight(const Dataset& fold, const MinimaxHyper& hyper);
KernelFunctionEstimate fit_bridge(const Dataset& fold, const MinimaxHyper& hyper);

inline constexpr double kOddsClipLow = 1e-3;
inline constexpr double kOddsClipHigh = 1e3;

Eigen::VectorXd clip_odds(Eigen::VectorXd values);

/// Residuals s - d * f(v_f) on new units.
Eigen::VectorXd minimax_residuals(const KernelFunctionEstimate& est, const Dataset& validation,
                                  const MinimaxRoles& roles);

double projected_risk(const KernelFunctionEstimate& est, const Dataset& validation,
                      const MinimaxRoles& roles, double lambda_g, double kappa_g);

double v_statistic_risk(const KernelFunctionEstimate& est, const Dataset& validation,
                        const MinimaxRoles& roles, double kappa_g);

enum class RiskKind { Projected, VStatistic };

struct HyperSelection {
  std::size_t index = 0;
  MinimaxHyper best;
  std::vector<double> risks;  // +inf for failing candidates
};

/// C-fold inner cross-validation; ties go to the lowest candidate index.
HyperSelection cv_select_hyperparams(const Dataset& fold, const MinimaxRoles& roles,
                                     const std::vector<MinimaxHyper>& candidates, int inner_folds,
                                     RiskKind risk, std::uint64_t seed);

struct HyperGrid {
  std::vector<double> lambdas{1e-6, 1e-4, 1e-2, 1e-1};
  std::vector<double> kappa_multipliers{0.25, 0.5, 1.0, 2.0, 4.0};
};

/// Coordinate search: tied (lambda, kappa multiplier) pairs first, then
/// lambda_f and lambda_g refined separately at the chosen bandwidths.
HyperSelection select_hyperparams(const Dataset& fold, const MinimaxRoles& roles, const HyperGrid& grid,
                                  int inner_folds, RiskKind risk, std::uint64_t seed);

/// Odds estimate, optionally a pilot times a kernel ratio correction.
struct OddsEstimate {
  KernelFunctionEstimate kernel;
  UnitFunction pilot;  // empty unless the ratio remedy was applied
  bool remedy_applied = false;

  Eigen::VectorXd evaluate_raw(const Dataset& data) const;
  Eigen::VectorXd evaluate(const Dataset& data) const { return clip_odds(evaluate_raw(data)); }
};

inline constexpr double kRemedyTrigger = 10.0;

/// Uses the ratio formulation when max/min of the pilot on the fold exceeds 10;
/// otherwise a plain odds fit.
OddsEstimate fit_odds_with_ratio_remedy(const Dataset& fold, const UnitFunction& pilot,
                                        const MinimaxHyper& hyper);

}  // namespace spc
