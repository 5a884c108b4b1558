#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spc/data_model.hpp"
#include "spc/features.hpp"

namespace spc {

struct BasisSpec {
  FeatureMap s_y;  // log-odds statistic, on (y, x)
  FeatureMap s_w;  // bridge basis, on (w, x)
  FeatureMap r_y;  // bridge instruments, on (y, x)
  FeatureMap r_w;  // odds instruments, on (w, x)

  /// S_y = (1, y, x), r_y = (1, y, x, y x), S_w = (1, w, x), r_w = (1, w, x, w (x) x).
  static BasisSpec defaults(int w_dim, int x_dim);
};

enum class MomentKind { EPS, Bridge, DoublyRobust };

std::string to_string(MomentKind kind);

struct MomentSpec {
  MomentKind kind = MomentKind::DoublyRobust;
  BasisSpec basis;
  double sensitivity_alpha_w = 0.0;
  FeatureMap sensitivity_feature{"w", {{FeatureTerm::Kind::ArgMean}}};

  bool uses_odds() const { return kind != MomentKind::Bridge; }
  bool uses_bridge() const { return kind != MomentKind::EPS; }
  bool sensitivity_active() const { return sensitivity_alpha_w != 0.0; }
};

/// Index layout of theta = (psi1, psi0, alpha..., eta...).
struct ThetaLayout {
  Eigen::Index alpha_begin = 2;
  Eigen::Index alpha_size = 0;
  Eigen::Index eta_begin = 2;
  Eigen::Index eta_size = 0;
  Eigen::Index size() const { return 2 + alpha_size + eta_size; }
};

ThetaLayout theta_layout(const MomentSpec& spec);

/// Throws InvalidArgument if the order conditions fail or sensitivity is
/// requested for the bridge system.
void check_spec(const MomentSpec& spec);

/// Precomputed basis evaluations for one dataset.
struct MomentData {
  Eigen::VectorXd y;
  Eigen::VectorXd a;
  Eigen::MatrixXd s_y, s_w, r_y, r_w;
  Eigen::VectorXd offset;  // sensitivity feature value per unit (zero if inactive)

  static MomentData build(const Dataset& data, const MomentSpec& spec);
  Eigen::Index size() const { return y.size(); }
  MomentData subset(const std::vector<Eigen::Index>& rows) const;
};

/// Numerically stable logistic function.
double expit(double z);

/// Per-unit moment rows (n x q) for the given moment system.
Eigen::MatrixXd moment_matrix(const MomentData& md, const Eigen::VectorXd& theta, const MomentSpec& spec);

/// Single-unit moments; `unit` indexes a row in `md`.
Eigen::VectorXd moment_ps(const MomentData& md, Eigen::Index unit, const Eigen::VectorXd& theta,
                          const MomentSpec& spec);
Eigen::VectorXd moment_or(const MomentData& md, Eigen::Index unit, const Eigen::VectorXd& theta,
                          const MomentSpec& spec);
Eigen::VectorXd moment_dr(const MomentData& md, Eigen::Index unit, const Eigen::VectorXd& theta,
                          const MomentSpec& spec);

struct GmmFlags {
  bool singular_weight = false;
  bool singular_jacobian_product = false;
  bool non_convergence = false;
  int iterations = 0;
  int chosen_start = 0;  // 0 = zeros and arm means, 1 = linear closed form
};

struct GmmFit {
  Eigen::VectorXd theta;
  Eigen::MatrixXd omega_weight;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd jacobian;
  Eigen::MatrixXd variance;
  double psi_hat = 0.0;
  double psi_se = 0.0;
  double objective = 0.0;
  double lambda = 0.0;
  Eigen::Index n = 0;
  GmmFlags flags;
  MomentKind kind = MomentKind::DoublyRobust;
  ThetaLayout layout;
  std::vector<std::string> alpha_names;
  std::vector<std::string> eta_names;

  /// Coefficient of the named log-odds term (like "y"), if present.
  std::optional<double> alpha_coefficient(const std::string& name) const;
  std::pair<double, double> ci(double alpha_level) const;
};

struct GmmOptions {
  int max_iterations = 500;
  double rel_tolerance = 1e-10;
  bool two_step = true;
};

/// Penalized two-step GMM: identity weight first, then the pseudo-inverse
/// of P[g g'] at the step-one estimate.
GmmFit fit_gmm(const Dataset& data, const MomentSpec& spec, double lambda, std::uint64_t seed,
               const GmmOptions& options = {});

struct GmmVariance {
  Eigen::MatrixXd variance;
  Eigen::MatrixXd jacobian;
  Eigen::MatrixXd sigma;
  double psi_se = 0.0;
  bool singular = false;
};

/// Sandwich variance with central-difference Jacobian.
GmmVariance gmm_variance(const Eigen::VectorXd& theta, const Eigen::MatrixXd& omega, const MomentData& md,
                         const MomentSpec& spec);

/// Per-unit influence values of psi_hat = psi1 - psi0.
Eigen::VectorXd gmm_influence(const GmmFit& fit, const Dataset& data, const MomentSpec& spec);

/// Fitted odds exp(alpha' S_y + alpha_w s(w)) on new units.
UnitFunction gmm_odds_function(const GmmFit& fit, const MomentSpec& spec);
/// Fitted bridge eta' S_w on new units.
UnitFunction gmm_bridge_function(const GmmFit& fit, const MomentSpec& spec);

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<double> candidates;  // ascending
  std::vector<double> scores;      // +inf for failures
};

/// Held-out average-moment criterion. groups = 0 means leave-one-out.
LambdaSelection cv_select_lambda(const Dataset& data, const MomentSpec& spec, std::vector<double> candidates,
                                 std::uint64_t seed, int groups = 10);

/// The free parameters of the eta-system in the just-identified linear case:
/// E{r_y S_w' | A=0}^{-1} E{r_y Y | A=0} (two-stage least squares when over-identified).
Eigen::VectorXd linear_bridge_coefficients(const MomentData& md);

}  // namespace spc
