#include "spc/semiparametric.hpp"

#include <cmath>

#include "spc/error.hpp"
#include "spc/gmm.hpp"
#include "spc/parallel.hpp"
#include "spc/rng.hpp"
#include "spc/stats.hpp"

namespace spc {

namespace {

Eigen::VectorXd checked(const UnitFunction& f, const Dataset& data, const char* what) {
  Eigen::VectorXd v = f(data);
  if (v.size() != data.size()) fail(ErrorCode::DimensionMismatch, std::string(what) + " returned the wrong length");
  if (!v.allFinite()) fail(ErrorCode::NumericalFailure, std::string(what) + " returned a non-finite value");
  return v;
}

double treated_share(const Dataset& data) {
  const double p = data.a.mean();
  if (!(p > 0.0)) fail(ErrorCode::NoTreatedUnits, "no treated units");
  return p;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t base, std::uint64_t tag) {
  CounterRng rng(base ^ (0xD1B54A32D192ED03ULL * (tag + 1)));
  return rng();
}

double plugin_psi0_eps(const Dataset& data, const UnitFunction& omega) {
  const Eigen::VectorXd w = checked(omega, data, "odds function");
  const Eigen::ArrayXd ctrl = 1.0 - data.a.array();
  const double den = (ctrl * w.array()).sum();
  if (!(std::abs(den) > 0.0)) fail(ErrorCode::ZeroDenominator, "weighted untreated total is zero");
  return (ctrl * data.y.array() * w.array()).sum() / den;
}

double plugin_psi0_bridge(const Dataset& data, const UnitFunction& bridge) {
  if (data.n_treated() == 0) fail(ErrorCode::NoTreatedUnits, "no treated units");
  const Eigen::VectorXd b = checked(bridge, data, "bridge function");
  return (data.a.array() * b.array()).sum() / static_cast<double>(data.n_treated());
}

Eigen::VectorXd influence_values(const Dataset& data, const UnitFunction& omega, const UnitFunction& bridge,
                                 double psi) {
  const double p = treated_share(data);
  const Eigen::ArrayXd w = checked(omega, data, "odds function").array();
  const Eigen::ArrayXd b = checked(bridge, data, "bridge function").array();
  const Eigen::ArrayXd a = data.a.array();
  const Eigen::ArrayXd y = data.y.array();
  return ((a * (y - b - psi) - (1.0 - a) * w * (y - b)) / p).matrix();
}

NuisanceFitter fixed_nuisance(UnitFunction omega, UnitFunction bridge) {
  return [omega = std::move(omega), bridge = std::move(bridge)](const Dataset&, std::uint64_t) {
    NuisancePair p;
    p.omega = omega;
    p.bridge = bridge;
    return p;
  };
}

NuisanceFitter minimax_fitter(const MinimaxFitterOptions& options) {
  return [options](const Dataset& train, std::uint64_t seed) {
    NuisancePair out;
    out.info.fitted = true;

    UnitFunction pilot;
    MinimaxRoles oroles = odds_roles();
    if (options.ratio_remedy) {
      MomentSpec eps;
      eps.kind = MomentKind::EPS;
      eps.basis = BasisSpec::defaults(static_cast<int>(train.w.cols()), static_cast<int>(train.x.cols()));
      try {
        const GmmFit pf = fit_gmm(train, eps, options.pilot_lambda, seed);
        pilot = gmm_odds_function(pf, eps);
        const Eigen::VectorXd tilde = pilot(train);
        if (tilde.allFinite() && tilde.minCoeff() > 0.0 && tilde.maxCoeff() > kRemedyTrigger * tilde.minCoeff()) {
          oroles = ratio_roles(pilot);
          out.info.remedy_applied = true;
        }
      } catch (const Error&) {
        // Without a usable pilot the plain odds fit is used.
        pilot = nullptr;
      }
    }

    const MinimaxRoles broles = bridge_roles();
    if (options.tune) {
      out.info.odds = select_hyperparams(train, oroles, options.grid, options.inner_folds, options.risk,
                                         stream_seed(seed, 1)).best;
      out.info.bridge = select_hyperparams(train, broles, options.grid, options.inner_folds, options.risk,
                                           stream_seed(seed, 2)).best;
    } else {
      out.info.odds = resolve(options.odds_fixed, median_bandwidths(train, oroles, stream_seed(seed, 1)));
      out.info.bridge = resolve(options.bridge_fixed, median_bandwidths(train, broles, stream_seed(seed, 2)));
    }

    OddsEstimate odds;
    if (out.info.remedy_applied) {
      odds = fit_odds_with_ratio_remedy(train, pilot, out.info.odds);
    } else {
      odds.kernel = fit_odds_weight(train, out.info.odds);
    }
    const KernelFunctionEstimate bridge = fit_bridge(train, out.info.bridge);
    out.omega = [odds](const Dataset& d) -> Eigen::VectorXd { return odds.evaluate(d); };
    out.bridge = [bridge](const Dataset& d) -> Eigen::VectorXd { return bridge.evaluate(proxy_arguments(d)); };
    return out;
  };
}

double CrossFitResult::se() const { return n > 0 ? std::sqrt(sigma2_hat / static_cast<double>(n)) : 0.0; }

CrossFitResult crossfit_with_partition(const Dataset& data, const FoldPartition& folds, const NuisanceFitter& fitter,
                                       std::uint64_t seed, double alpha_level) {
  validate_dataset(data);
  if (static_cast<Eigen::Index>(folds.assignments.size()) != data.size()) {
    fail(ErrorCode::DimensionMismatch, "fold partition does not match the dataset");
  }
  const int k = folds.k;
  const double n = static_cast<double>(data.size());
  const double p = treated_share(data);
  const double mean_ay = (data.a.array() * data.y.array()).sum() / n;

  CrossFitResult out;
  out.n = data.size();
  out.n_treated = data.n_treated();
  out.folds = folds;
  out.per_fold_psi.resize(k);
  out.influence_values.resize(data.size());
  out.fold_info.resize(static_cast<std::size_t>(k));

  struct FoldOutput {
    std::vector<Eigen::Index> rows;
    Eigen::VectorXd w, b;
  };
  std::vector<FoldOutput> outputs(static_cast<std::size_t>(k));
  parallel_for(static_cast<std::size_t>(k), [&](std::size_t j) {
    const int fold = static_cast<int>(j) + 1;
    const auto train_rows = folds.complement(fold);
    FoldOutput& fo = outputs[j];
    fo.rows = folds.fold(fold);
    const Dataset train = data.subset(train_rows);
    const Dataset eval = data.subset(fo.rows);
    const NuisancePair nuis = fitter(train, stream_seed(seed, j));
    fo.w = checked(nuis.omega, eval, "odds function");
    fo.b = checked(nuis.bridge, eval, "bridge function");
    out.fold_info[j] = nuis.info;
  });

  double sigma_sum = 0.0;
  for (int j = 0; j < k; ++j) {
    const FoldOutput& fo = outputs[static_cast<std::size_t>(j)];
    const auto m = static_cast<double>(fo.rows.size());
    double pk = 0.0;
    for (std::size_t r = 0; r < fo.rows.size(); ++r) {
      const Eigen::Index i = fo.rows[r];
      const double a = data.a[i];
      const double y = data.y[i];
      const auto rr = static_cast<Eigen::Index>(r);
      pk += (1.0 - a) * fo.w[rr] * (y - fo.b[rr]) + a * fo.b[rr];
    }
    pk /= m;
    const double psi_k = (mean_ay - pk) / p;
    out.per_fold_psi[j] = psi_k;
    double sq = 0.0;
    for (std::size_t r = 0; r < fo.rows.size(); ++r) {
      const Eigen::Index i = fo.rows[r];
      const double a = data.a[i];
      const double y = data.y[i];
      const auto rr = static_cast<Eigen::Index>(r);
      const double num = a * (y - fo.b[rr] - psi_k) - (1.0 - a) * fo.w[rr] * (y - fo.b[rr]);
      out.influence_values[i] = num / p;
      sq += num * num;
    }
    sigma_sum += sq / m / (p * p);
  }
  out.psi_hat = out.per_fold_psi.mean();
  out.sigma2_hat = sigma_sum / k;
  const double half = two_sided_critical(alpha_level) * out.se();
  out.ci = {out.psi_hat - half, out.psi_hat + half};
  return out;
}

CrossFitResult crossfit_estimate(const Dataset& data, int k, const NuisanceFitter& fitter, std::uint64_t seed,
                                 double alpha_level) {
  validate_dataset(data);
  const FoldPartition folds = split_folds(data.size(), k, data.a, derive_seed(seed, seed_offset::fold_split));
  return crossfit_with_partition(data, folds, fitter, seed, alpha_level);
}

BootstrapResult multiplier_bootstrap(const Eigen::VectorXd& influence, int b, std::uint64_t seed, double alpha_level) {
  if (b < 2) fail(ErrorCode::InvalidArgument, "bootstrap needs at least 2 draws");
  if (influence.size() == 0) fail(ErrorCode::EmptyInput, "no influence values");
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  CounterRng rng(seed);
  const auto n = static_cast<double>(influence.size());
  Eigen::VectorXd e(b);
  for (int r = 0; r < b; ++r) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < influence.size(); ++i) s += rng.normal() * influence[i];
    e[r] = s / n;
  }
  BootstrapResult out;
  out.variance = sample_variance(e);
  std::vector<double> draws(e.data(), e.data() + e.size());
  out.q_low = quantile(draws, alpha_level / 2.0);
  out.q_high = quantile(draws, 1.0 - alpha_level / 2.0);
  return out;
}

MedianAdjusted median_adjust(const std::vector<std::pair<double, double>>& reps) {
  if (reps.empty()) fail(ErrorCode::EmptyInput, "median adjustment needs at least one repetition");
  MedianAdjusted out;
  out.reps = reps;
  std::vector<double> psis;
  psis.reserve(reps.size());
  for (const auto& r : reps) psis.push_back(r.first);
  out.psi_median = median(psis);
  std::vector<double> inflated;
  inflated.reserve(reps.size());
  for (const auto& r : reps) {
    const double d = r.first - out.psi_median;
    inflated.push_back(r.second + d * d);
  }
  out.sigma2_median = median(inflated);
  return out;
}

RepeatedCrossFit repeated_crossfit(const Dataset& data, int k, int reps, const NuisanceFitter& fitter,
                                   std::uint64_t master_seed, double alpha_level, bool keep_runs) {
  if (reps < 1) fail(ErrorCode::InvalidArgument, "at least one repetition is required");
  std::vector<CrossFitResult> runs(static_cast<std::size_t>(reps));
  parallel_for(static_cast<std::size_t>(reps), [&](std::size_t s) {
    const std::uint64_t seed = derive_seed(master_seed, seed_offset::median_rep_base + s);
    runs[s] = crossfit_estimate(data, k, fitter, seed, alpha_level);
  });
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(runs.size());
  for (const auto& r : runs) pairs.emplace_back(r.psi_hat, r.sigma2_hat);
  RepeatedCrossFit out;
  out.median = median_adjust(pairs);
  out.se = std::sqrt(out.median.sigma2_median / static_cast<double>(data.size()));
  const double half = two_sided_critical(alpha_level) * out.se;
  out.ci = {out.median.psi_median - half, out.median.psi_median + half};
  if (keep_runs) out.runs = std::move(runs);
  return out;
}

}  // namespace spc
