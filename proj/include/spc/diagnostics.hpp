#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spc/data_model.hpp"
#include "spc/gmm.hpp"
#include "spc/semiparametric.hpp"

namespace spc {

struct SensitivityPoint {
  double alpha_w = 0.0;
  bool ok = false;  // false marks a gap (the fit failed)
  double psi = 0.0;
  double se = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
  std::optional<double> alpha_y;
  std::string error;
};

struct SensitivityLandmarks {
  std::optional<double> ci_contains_zero;
  std::optional<double> psi_positive;
  std::optional<double> overlaps_crude;
};

struct SensitivityCurve {
  std::vector<double> grid;
  std::vector<SensitivityPoint> estimates;
  SensitivityLandmarks landmarks;
};

/// Refits the EPS system with the log-odds offset alpha_w * s(w) for each grid value.
SensitivityCurve sensitivity_curve(const Dataset& data, const MomentSpec& spec, const std::vector<double>& alpha_w_grid,
                                   double lambda, std::pair<double, double> crude_ci, std::uint64_t seed,
                                   double alpha_level = 0.05);

/// First-crossing scan over the successful grid points.
SensitivityLandmarks find_landmarks(const std::vector<SensitivityPoint>& points, std::pair<double, double> crude_ci);

/// Two columns (alpha_w, psi); gaps leave psi empty.
std::string sensitivity_csv(const SensitivityCurve& curve);

struct OveridResult {
  double psi_small = 0.0;
  double psi_large = 0.0;
  double varsigma2 = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  double alpha_level = 0.05;
  bool reject = false;
  Eigen::Index n = 0;

  double difference() const { return psi_large - psi_small; }
  double se() const;
};

/// T = |psi_large - psi_small| / sqrt(varsigma2 / N), varsigma2 the variance
/// of the paired influence-value differences.
OveridResult overid_test(double psi_small, double psi_large, const Eigen::VectorXd& if_small,
                         const Eigen::VectorXd& if_large, double alpha_level);

OveridResult overid_test(const CrossFitResult& small, const CrossFitResult& large, double alpha_level);

/// GMM variant; influence values come from gmm_influence on the same units.
OveridResult overid_test(const GmmFit& small, const GmmFit& large, const Eigen::VectorXd& if_small,
                         const Eigen::VectorXd& if_large, double alpha_level);

struct SemiparametricOverid {
  CrossFitResult small;
  CrossFitResult large;
  OveridResult test;
};

/// Cross-fits both proxy sets on one shared fold partition so the influence
/// values pair unit by unit.
SemiparametricOverid overid_semiparametric(const Dataset& data, const std::vector<Eigen::Index>& small_proxies,
                                           const std::vector<Eigen::Index>& large_proxies, int k,
                                           const NuisanceFitter& fitter, std::uint64_t seed, double alpha_level);

}  // namespace spc
