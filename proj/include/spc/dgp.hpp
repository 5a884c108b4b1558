#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "spc/data_model.hpp"

namespace spc {

enum class DgpKind { GaussianA3, BinaryDiscrete, RankPreserving, LatentMonotone };

std::string to_string(DgpKind kind);
/// "gaussian-a3", "binary-discrete", "rank-preserving", "latent-monotone".
DgpKind parse_dgp_kind(const std::string& text);

struct DgpSpec {
  DgpKind kind = DgpKind::GaussianA3;
  Eigen::Index n = 1000;
  double tau = 0.0;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;

  double param(const std::string& name, double fallback) const;
};

/// Population quantities of a generator. Scalar callables act on a unit's
/// first proxy / outcome; covariate-free designs only.
struct TrueDgpFunctions {
  std::function<double(double)> omega_star;   // odds of A = 1 given Y0 = y
  std::function<double(double)> bridge_star;  // b*(w)
  std::function<double(double)> w_odds;      // odds of A = 1 given W = w
  std::function<double(double)> p_star;      // Pr(A = 1 | W = w)
  // Y0 | W = w, A = 0 ~ Normal(cond_slope * w, cond_var) for the Gaussian design.
  double cond_slope = 0.0;
  double cond_var = 0.0;
  double psi0_star = 0.0;
  double psi1_star = 0.0;
  double psi_star = 0.0;

  UnitFunction omega_unit() const;   // omega_star(Y) per unit
  UnitFunction bridge_unit() const;  // bridge_star(W_1) per unit
  double cond_density(double y, double w) const;
};

struct GeneratedData {
  Dataset data;
  TrueDgpFunctions truth;
};

/// A ~ Bernoulli(1/2), Y0 | A ~ Normal(0.25 A, 1), W = Y0 + eps, Y = Y0 + A (tau + h Y0)
/// with h = params["hetero"] (default 0).
GeneratedData gen_gaussian_a3(const DgpSpec& spec);

/// Exact finite-support law with W independent of A given Y0.
struct BinaryTables {
  double p_a = 0.5;
  double p_y1_a0 = 0.5;  // Pr(Y0 = 1 | A = 0)
  double p_y1_a1 = 0.5;  // Pr(Y0 = 1 | A = 1)
  double p_w1_y0 = 0.3;  // Pr(W = 1 | Y0 = 0)
  double p_w1_y1 = 0.8;  // Pr(W = 1 | Y0 = 1)

  /// Pr(W = w | Y0 = y, A = a); identical across a by construction.
  double p_w_given_y_a(int w, int y, int a) const;
  double p_y_given_a(int y, int a) const;
  double joint(int w, int y, int a) const;  // Pr(W = w, Y0 = y, A = a)
  double p_w1_given_a(int a) const;
  /// psi0* = E{Y0 | A = 1}.
  double psi0_star() const { return p_y1_a1; }
  /// Units whose empirical law is the table, when all cell masses times
  /// `denominator` are integers (InvalidArgument otherwise).
  Dataset population(long denominator) const;
};

struct BinaryGenerated {
  Dataset data;
  BinaryTables tables;
  double b0 = 0.0;
  double b1 = 0.0;
  double psi0_star = 0.0;
  double psi_star = 0.0;
};

/// params: p_a, p_y1_a0, p_y1_a1, p_w1_y0, p_w1_y1. Y = Y0 + tau A.
BinaryGenerated gen_binary_discrete(const DgpSpec& spec);

struct BinaryBridge {
  double b0 = 0.0;
  double b1 = 0.0;
  double b1_plus_b0() const { return b1 + b0; }
  double slope() const { return b1 - b0; }
  double operator()(double w) const { return b0 + (b1 - b0) * w; }
};

/// b(0) = -p0 / D, b(1) = (1 - p0) / D with D = p1 - p0.
BinaryBridge binary_bridge_closed_form(double p_w1_y1, double p_w1_y0);

/// Joint masses Pr(W = w_i, Y = y_j | A = 0) on finite supports.
struct DiscreteJoint {
  Eigen::VectorXd w_values;
  Eigen::VectorXd y_values;
  Eigen::MatrixXd mass;  // |W| x |Y|
};

struct DiscreteBridge {
  Eigen::VectorXd values;  // b(w_i)
  double residual = 0.0;
  bool non_unique = false;
  Eigen::Index rank = 0;
};

inline constexpr double kBridgeFeasibilityTol = 1e-10;

/// Minimum-norm solution of sum_w b(w) Pr(W = w | Y = y, A = 0) = y.
DiscreteBridge brute_force_bridge_discrete(const DiscreteJoint& joint);

/// One covariate X ~ Normal(0, 1); A ~ Bernoulli(expit(-0.2 + 0.6 Y0 + 0.3 X));
/// W = 0.5 + 0.8 Y0 + 0.3 X + Normal(0, 1); Y = Y0 + tau A.
/// `y0_out`, when given, receives the treatment-free outcomes.
Dataset gen_rank_preserving(const DgpSpec& spec, Eigen::VectorXd* y0_out = nullptr);

/// U0 ~ Normal(0, 1), A ~ Bernoulli(expit(0.8 U0)), Y0 = h_y(U0) with
/// h_y(u) = u + 0.2 u^3, W = U0 + Normal(0, 1), Y = Y0 + tau A.
Dataset gen_latent_monotone(const DgpSpec& spec);

/// max_w |E{omega*(Y0) | W = w, A = 0} - Odds(W = w)| by 64-node Gauss-Hermite quadrature.
double result1_identity_check(const TrueDgpFunctions& fns, const std::vector<double>& w_grid);

}  // namespace spc
