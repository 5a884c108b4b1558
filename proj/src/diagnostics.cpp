#include "spc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "spc/error.hpp"
#include "spc/parallel.hpp"
#include "spc/rng.hpp"
#include "spc/stats.hpp"

namespace spc {

SensitivityCurve sensitivity_curve(const Dataset& data, const MomentSpec& spec, const std::vector<double>& alpha_w_grid,
                                   double lambda, std::pair<double, double> crude_ci, std::uint64_t seed,
                                   double alpha_level) {
  if (alpha_w_grid.empty()) fail(ErrorCode::EmptyInput, "sensitivity grid is empty");
  if (!std::is_sorted(alpha_w_grid.begin(), alpha_w_grid.end())) {
    fail(ErrorCode::InvalidArgument, "sensitivity grid must be sorted");
  }
  if (spec.kind != MomentKind::EPS) fail(ErrorCode::ConflictingOptions, "sensitivity analysis uses the EPS system");
  validate_dataset(data);

  SensitivityCurve out;
  out.grid = alpha_w_grid;
  out.estimates.resize(alpha_w_grid.size());
  parallel_for(alpha_w_grid.size(), [&](std::size_t i) {
    SensitivityPoint& pt = out.estimates[i];
    pt.alpha_w = alpha_w_grid[i];
    MomentSpec s = spec;
    s.sensitivity_alpha_w = pt.alpha_w;
    try {
      const GmmFit fit = fit_gmm(data, s, lambda, seed);
      if (!std::isfinite(fit.psi_hat) || !std::isfinite(fit.psi_se)) {
        fail(ErrorCode::NumericalFailure, "non-finite estimate");
      }
      pt.psi = fit.psi_hat;
      pt.se = fit.psi_se;
      pt.ci = fit.ci(alpha_level);
      pt.alpha_y = fit.alpha_coefficient("y");
      pt.ok = true;
    } catch (const Error& e) {
      pt.ok = false;
      pt.error = e.what();
    }
  });
  out.landmarks = find_landmarks(out.estimates, crude_ci);
  return out;
}

SensitivityLandmarks find_landmarks(const std::vector<SensitivityPoint>& points, std::pair<double, double> crude_ci) {
  SensitivityLandmarks lm;
  for (const auto& p : points) {
    if (!p.ok) continue;
    if (!lm.ci_contains_zero && p.ci.first <= 0.0 && p.ci.second >= 0.0) lm.ci_contains_zero = p.alpha_w;
    if (!lm.psi_positive && p.psi > 0.0) lm.psi_positive = p.alpha_w;
    if (!lm.overlaps_crude && p.ci.second >= crude_ci.first && p.ci.first <= crude_ci.second) {
      lm.overlaps_crude = p.alpha_w;
    }
  }
  return lm;
}

std::string sensitivity_csv(const SensitivityCurve& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "alpha_w,psi\n";
  for (const auto& p : curve.estimates) {
    os << p.alpha_w << ',';
    if (p.ok) os << p.psi;
    os << '\n';
  }
  return os.str();
}

double OveridResult::se() const { return n > 0 ? std::sqrt(varsigma2 / static_cast<double>(n)) : 0.0; }

OveridResult overid_test(double psi_small, double psi_large, const Eigen::VectorXd& if_small,
                         const Eigen::VectorXd& if_large, double alpha_level) {
  if (if_small.size() != if_large.size()) {
    fail(ErrorCode::MismatchedUnits, "influence vectors cover different units");
  }
  if (if_small.size() == 0) fail(ErrorCode::EmptyInput, "no influence values");
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  OveridResult r;
  r.psi_small = psi_small;
  r.psi_large = psi_large;
  r.alpha_level = alpha_level;
  r.n = if_small.size();
  r.varsigma2 = population_variance(if_large - if_small);
  const double diff = std::abs(psi_large - psi_small);
  if (diff == 0.0) {
    r.t_stat = 0.0;
  } else if (r.varsigma2 <= 0.0) {
    r.t_stat = std::numeric_limits<double>::infinity();
  } else {
    r.t_stat = diff / r.se();
  }
  r.p_value = std::clamp(2.0 * (1.0 - normal_cdf(r.t_stat)), 0.0, 1.0);
  r.reject = r.t_stat >= two_sided_critical(alpha_level);
  return r;
}

OveridResult overid_test(const CrossFitResult& small, const CrossFitResult& large, double alpha_level) {
  if (small.n != large.n) fail(ErrorCode::MismatchedUnits, "cross-fit results cover different units");
  return overid_test(small.psi_hat, large.psi_hat, small.influence_values, large.influence_values, alpha_level);
}

OveridResult overid_test(const GmmFit& small, const GmmFit& large, const Eigen::VectorXd& if_small,
                         const Eigen::VectorXd& if_large, double alpha_level) {
  if (small.n != large.n || if_small.size() != small.n) {
    fail(ErrorCode::MismatchedUnits, "GMM fits cover different units");
  }
  return overid_test(small.psi_hat, large.psi_hat, if_small, if_large, alpha_level);
}

SemiparametricOverid overid_semiparametric(const Dataset& data, const std::vector<Eigen::Index>& small_proxies,
                                           const std::vector<Eigen::Index>& large_proxies, int k,
                                           const NuisanceFitter& fitter, std::uint64_t seed, double alpha_level) {
  validate_dataset(data);
  const FoldPartition folds = split_folds(data.size(), k, data.a, derive_seed(seed, seed_offset::fold_split));
  SemiparametricOverid out;
  out.small = crossfit_with_partition(data.with_proxies(small_proxies), folds, fitter, seed, alpha_level);
  out.large = crossfit_with_partition(data.with_proxies(large_proxies), folds, fitter, seed, alpha_level);
  out.test = overid_test(out.small, out.large, alpha_level);
  return out;
}

}  // namespace spc
