#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "spc/data_model.hpp"
#include "spc/minimax.hpp"

namespace spc {

/// psi0 = sum (1-A) Y w / sum (1-A) w.
double plugin_psi0_eps(const Dataset& data, const UnitFunction& omega);

/// psi0 = mean of b(W, X) over treated units.
double plugin_psi0_bridge(const Dataset& data, const UnitFunction& bridge);

/// [A{Y - b - psi} - (1-A) w {Y - b}] / mean(A), per unit.
Eigen::VectorXd influence_values(const Dataset& data, const UnitFunction& omega, const UnitFunction& bridge,
                                 double psi);

struct NuisanceInfo {
  MinimaxHyper odds;
  MinimaxHyper bridge;
  bool remedy_applied = false;
  bool fitted = false;  // false for injected functions
};

struct NuisancePair {
  UnitFunction omega;
  UnitFunction bridge;
  NuisanceInfo info;
};

/// Fits (omega, b) on a training fold; `seed` drives any internal randomness.
using NuisanceFitter = std::function<NuisancePair(const Dataset& train, std::uint64_t seed)>;

/// Returns the given functions regardless of the training data.
NuisanceFitter fixed_nuisance(UnitFunction omega, UnitFunction bridge);

struct MinimaxFitterOptions {
  bool tune = true;  // cross-validate on each training fold
  HyperGrid grid;
  int inner_folds = 5;
  RiskKind risk = RiskKind::VStatistic;
  RelativeHyper odds_fixed;    // used when tune is false
  RelativeHyper bridge_fixed;  // used when tune is false
  bool ratio_remedy = true;
  double pilot_lambda = 1e-3;
};

/// Kernel minimax nuisance fitter; the remedy pilot is an EPS GMM fit with
/// the default bases.
NuisanceFitter minimax_fitter(const MinimaxFitterOptions& options);

struct CrossFitResult {
  Eigen::VectorXd per_fold_psi;
  double psi_hat = 0.0;
  double sigma2_hat = 0.0;
  Eigen::VectorXd influence_values;
  std::pair<double, double> ci{0.0, 0.0};
  Eigen::Index n_treated = 0;
  Eigen::Index n = 0;
  FoldPartition folds;
  std::vector<NuisanceInfo> fold_info;

  double se() const;
};

CrossFitResult crossfit_estimate(const Dataset& data, int k, const NuisanceFitter& fitter, std::uint64_t seed,
                                 double alpha_level);

/// Cross-fit on a given partition (shared partitions pair influence values across proxy sets).
CrossFitResult crossfit_with_partition(const Dataset& data, const FoldPartition& folds, const NuisanceFitter& fitter,
                                       std::uint64_t seed, double alpha_level);

struct BootstrapResult {
  double variance = 0.0;
  double q_low = 0.0;   // alpha/2 percentile of the multiplier means
  double q_high = 0.0;  // 1 - alpha/2 percentile

  std::pair<double, double> ci(double psi_hat) const { return {psi_hat + q_low, psi_hat + q_high}; }
};

BootstrapResult multiplier_bootstrap(const Eigen::VectorXd& influence, int b, std::uint64_t seed, double alpha_level);

struct MedianAdjusted {
  double psi_median = 0.0;
  double sigma2_median = 0.0;
  std::vector<std::pair<double, double>> reps;  // (psi_s, sigma2_s)
};

MedianAdjusted median_adjust(const std::vector<std::pair<double, double>>& reps);

struct RepeatedCrossFit {
  MedianAdjusted median;
  std::vector<CrossFitResult> runs;
  std::pair<double, double> ci{0.0, 0.0};
  double se = 0.0;
};

/// S independent splits, repetition s seeded with master + 1000 + s.
RepeatedCrossFit repeated_crossfit(const Dataset& data, int k, int reps, const NuisanceFitter& fitter,
                                   std::uint64_t master_seed, double alpha_level, bool keep_runs = false);

/// Derived seed for an internal stream (e.g. the nuisance fit on fold k).
std::uint64_t stream_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace spc
