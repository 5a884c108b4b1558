#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "spc/dgp.hpp"
#include "spc/parallel.hpp"
#include "spc/semiparametric.hpp"

using namespace spc;
using spc::test::error_code_of;

namespace {

GeneratedData gaussian(Eigen::Index n, std::uint64_t seed, double tau = 1.0) {
  DgpSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.tau = tau;
  return gen_gaussian_a3(spec);
}

UnitFunction constant(double c) {
  return [c](const Dataset& d) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(d.size(), c); };
}

double mc_se(const Eigen::VectorXd& v) {
  const double n = static_cast<double>(v.size());
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (n - 1.0) / n);
}

}  // namespace

TEST_CASE("EPS plug-in") {
  const GeneratedData g = gaussian(100000, 1);
  double s0 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < g.data.size(); ++i) {
    if (g.data.a[i] == 0.0) {
      s0 += g.data.y[i];
      n0 += 1;
    }
  }
  CHECK(plugin_psi0_eps(g.data, constant(1.0)) == doctest::Approx(s0 / n0).epsilon(1e-12));
  CHECK(std::abs(plugin_psi0_eps(g.data, g.truth.omega_unit()) - 0.25) <= 0.02);

  std::vector<Eigen::Index> treated;
  for (Eigen::Index i = 0; i < 100; ++i) {
    if (g.data.a[i] == 1.0) treated.push_back(i);
  }
  CHECK(error_code_of([&] { plugin_psi0_eps(g.data.subset(treated), constant(1.0)); }) == ErrorCode::ZeroDenominator);
}

TEST_CASE("bridge plug-in") {
  const GeneratedData g = gaussian(100000, 2);
  CHECK(plugin_psi0_bridge(g.data, constant(0.37)) == doctest::Approx(0.37).epsilon(1e-12));
  CHECK(std::abs(plugin_psi0_bridge(g.data, g.truth.bridge_unit()) - 0.25) <= 0.02);

  std::vector<Eigen::Index> control;
  for (Eigen::Index i = 0; i < 100; ++i) {
    if (g.data.a[i] == 0.0) control.push_back(i);
  }
  CHECK(error_code_of([&] { plugin_psi0_bridge(g.data.subset(control), constant(1.0)); }) ==
        ErrorCode::NoTreatedUnits);
}

TEST_CASE("bridge plug-in on an exact binary population matches the binary display") {
  BinaryTables t;
  t.p_a = 0.5;
  t.p_y1_a0 = 0.4;
  t.p_y1_a1 = 0.5;
  t.p_w1_y0 = 0.3;
  t.p_w1_y1 = 0.8;
  const Dataset pop = t.population(1000);
  const BinaryBridge b = binary_bridge_closed_form(t.p_w1_y1, t.p_w1_y0);
  const UnitFunction bf = [b](const Dataset& d) -> Eigen::VectorXd { return d.w.col(0).unaryExpr(b); };
  const double display = (t.p_w1_given_a(1) - t.p_w1_y0) / (t.p_w1_y1 - t.p_w1_y0);
  CHECK(std::abs(plugin_psi0_bridge(pop, bf) - display) <= 1e-12);
  CHECK(std::abs(display - t.psi0_star()) <= 1e-12);
}

TEST_CASE("influence values have mean zero under single misspecification") {
  const GeneratedData g = gaussian(100000, 3);
  const double psi = g.truth.psi_star;
  SUBCASE("both nuisances correct") {
    const Eigen::VectorXd v = influence_values(g.data, g.truth.omega_unit(), g.truth.bridge_unit(), psi);
    CHECK(std::abs(v.mean()) <= 3.0 * mc_se(v));
  }
  SUBCASE("wrong bridge") {
    const Eigen::VectorXd v = influence_values(g.data, g.truth.omega_unit(), constant(0.0), psi);
    CHECK(std::abs(v.mean()) <= 3.0 * mc_se(v));
  }
  SUBCASE("wrong odds") {
    const Eigen::VectorXd v = influence_values(g.data, constant(1.0), g.truth.bridge_unit(), psi);
    CHECK(std::abs(v.mean()) <= 3.0 * mc_se(v));
  }
  SUBCASE("both wrong is detectably biased") {
    const Eigen::VectorXd v = influence_values(g.data, constant(1.0), constant(0.0), psi);
    CHECK(std::abs(v.mean()) > 3.0 * mc_se(v));
  }
}

TEST_CASE("stub nuisances reduce the fold estimate to a difference of sums") {
  const GeneratedData g = gaussian(500, 4);
  const Dataset& d = g.data;
  const CrossFitResult r = crossfit_estimate(d, 3, fixed_nuisance(constant(1.0), constant(0.0)), 11, 0.05);
  const double n = static_cast<double>(d.size());
  const double mean_a = d.a.mean();
  const double mean_ay = (d.a.array() * d.y.array()).sum() / n;
  for (int k = 1; k <= 3; ++k) {
    const auto rows = r.folds.fold(k);
    double pk = 0.0;
    for (auto i : rows) pk += (1.0 - d.a[i]) * d.y[i];
    pk /= static_cast<double>(rows.size());
    CHECK(r.per_fold_psi[k - 1] == doctest::Approx((mean_ay - pk) / mean_a).epsilon(1e-12));
  }
  CHECK(r.psi_hat == doctest::Approx(r.per_fold_psi.mean()).epsilon(1e-14));
  CHECK(r.sigma2_hat >= 0.0);
  CHECK(r.ci.first <= r.psi_hat);
  CHECK(r.ci.second >= r.psi_hat);
  CHECK(r.n_treated == d.n_treated());
}

TEST_CASE("cross-fit variance is the fold average of squared centred influence values") {
  CounterRng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Dataset d = spc::test::random_dataset(rng, 40 + static_cast<Eigen::Index>(rng.below(40)), 1, 0);
    const double c = rng.normal();
    const CrossFitResult r = crossfit_estimate(d, 2, fixed_nuisance(constant(1.0 + rng.uniform()), constant(c)),
                                               rng(), 0.1);
    double s = 0.0;
    for (int k = 1; k <= 2; ++k) {
      const auto rows = r.folds.fold(k);
      double sq = 0.0;
      for (auto i : rows) sq += r.influence_values[i] * r.influence_values[i];
      s += sq / static_cast<double>(rows.size());
    }
    CHECK(r.sigma2_hat == doctest::Approx(s / 2.0).epsilon(1e-12));
    CHECK(r.sigma2_hat >= 0.0);
  }
}

TEST_CASE("injected true nuisances agree with the plug-in contrast") {
  const GeneratedData g = gaussian(100000, 6);
  const CrossFitResult r =
      crossfit_estimate(g.data, 2, fixed_nuisance(g.truth.omega_unit(), g.truth.bridge_unit()), 7, 0.05);
  double s1 = 0, n1 = 0;
  for (Eigen::Index i = 0; i < g.data.size(); ++i) {
    if (g.data.a[i] == 1.0) {
      s1 += g.data.y[i];
      n1 += 1;
    }
  }
  const double eps_ett = s1 / n1 - plugin_psi0_eps(g.data, g.truth.omega_unit());
  const double bridge_ett = s1 / n1 - plugin_psi0_bridge(g.data, g.truth.bridge_unit());
  CHECK(std::abs(r.psi_hat - eps_ett) <= 3.0 * r.se());
  CHECK(std::abs(r.psi_hat - bridge_ett) <= 3.0 * r.se());
  CHECK(std::abs(r.psi_hat - 1.0) <= 3.0 * r.se());
  for (const auto& info : r.fold_info) CHECK_FALSE(info.fitted);
}

TEST_CASE("kernel cross-fit on the Gaussian design covers the truth") {
  const GeneratedData g = gaussian(4000, 8);
  const CrossFitResult r = crossfit_estimate(g.data, 2, minimax_fitter({}), 20231, 0.05);
  CHECK(std::abs(r.psi_hat - 1.0) <= 3.0 * r.se());
  for (const auto& info : r.fold_info) CHECK(info.fitted);

  const BootstrapResult b = multiplier_bootstrap(r.influence_values, 2000, 20232, 0.05);
  const double n = static_cast<double>(g.data.size());
  CHECK(b.variance * n == doctest::Approx(r.sigma2_hat).epsilon(0.15));
  const auto ci = b.ci(r.psi_hat);
  CHECK(ci.first < r.psi_hat);
  CHECK(ci.second > r.psi_hat);
}

TEST_CASE("cross-fit is independent of the worker count") {
  const GeneratedData g = gaussian(600, 9);
  set_thread_count(1);
  const CrossFitResult a = crossfit_estimate(g.data, 3, minimax_fitter({}), 5, 0.05);
  set_thread_count(4);
  const CrossFitResult b = crossfit_estimate(g.data, 3, minimax_fitter({}), 5, 0.05);
  set_thread_count(1);
  CHECK(a.psi_hat == b.psi_hat);
  CHECK(a.sigma2_hat == b.sigma2_hat);
  CHECK(a.influence_values == b.influence_values);
}

TEST_CASE("multiplier bootstrap scaling") {
  const Eigen::Index n = 500;
  const double c = 2.0;
  const BootstrapResult b = multiplier_bootstrap(Eigen::VectorXd::Constant(n, c), 2000, 3, 0.05);
  CHECK(b.variance == doctest::Approx(c * c / static_cast<double>(n)).epsilon(0.2));
  CHECK(b.q_low < 0.0);
  CHECK(b.q_high > 0.0);

  const BootstrapResult z = multiplier_bootstrap(Eigen::VectorXd::Zero(n), 100, 3, 0.05);
  CHECK(z.variance == 0.0);
  CHECK(z.ci(1.5).first == 1.5);
  CHECK(z.ci(1.5).second == 1.5);

  const BootstrapResult again = multiplier_bootstrap(Eigen::VectorXd::Constant(n, c), 2000, 3, 0.05);
  CHECK(again.variance == b.variance);
  CHECK(error_code_of([&] { multiplier_bootstrap(Eigen::VectorXd::Ones(3), 1, 3, 0.05); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("median adjustment") {
  const MedianAdjusted m = median_adjust({{1, 1}, {2, 1}, {10, 1}});
  CHECK(m.psi_median == 2.0);
  CHECK(m.sigma2_median == 2.0);  // median of {2, 1, 65}

  const MedianAdjusted one = median_adjust({{0.3, 0.7}});
  CHECK(one.psi_median == 0.3);
  CHECK(one.sigma2_median == 0.7);

  const MedianAdjusted even = median_adjust({{1, 0}, {3, 0}});
  CHECK(even.psi_median == 2.0);
  CHECK(even.sigma2_median == 1.0);

  CHECK(error_code_of([] { median_adjust({}); }) == ErrorCode::EmptyInput);

  CounterRng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<double, double>> reps;
    const int s = 1 + static_cast<int>(rng.below(12));
    for (int i = 0; i < s; ++i) reps.emplace_back(rng.normal(), rng.uniform());
    const MedianAdjusted base = median_adjust(reps);
    for (std::size_t i = reps.size(); i > 1; --i) std::swap(reps[i - 1], reps[rng.below(i)]);
    const MedianAdjusted shuffled = median_adjust(reps);
    CHECK(shuffled.psi_median == base.psi_median);
    CHECK(shuffled.sigma2_median == base.sigma2_median);
    double smallest = reps[0].second;
    for (const auto& r : reps) smallest = std::min(smallest, r.second);
    CHECK(base.sigma2_median >= smallest);
  }
}

TEST_CASE("repeated splits use the documented seed stream") {
  const GeneratedData g = gaussian(300, 13);
  const NuisanceFitter f = fixed_nuisance(g.truth.omega_unit(), constant(0.0));
  const RepeatedCrossFit rep = repeated_crossfit(g.data, 2, 4, f, 100, 0.05, true);
  REQUIRE(rep.runs.size() == 4);
  std::vector<double> psis;
  for (int s = 0; s < 4; ++s) {
    const CrossFitResult single = crossfit_estimate(g.data, 2, f, 100 + 1000 + static_cast<std::uint64_t>(s), 0.05);
    CHECK(single.psi_hat == rep.runs[static_cast<std::size_t>(s)].psi_hat);
    CHECK(single.folds.seed == 100 + 1000 + static_cast<std::uint64_t>(s));
    psis.push_back(single.psi_hat);
  }
  std::sort(psis.begin(), psis.end());
  CHECK(rep.median.psi_median == doctest::Approx(0.5 * (psis[1] + psis[2])).epsilon(1e-15));
  CHECK(rep.se == doctest::Approx(std::sqrt(rep.median.sigma2_median / 300.0)));
}

TEST_CASE("nuisance output of the wrong length is rejected") {
  CounterRng rng(14);
  const Dataset d = spc::test::random_dataset(rng, 30, 1, 0);
  const UnitFunction bad = [](const Dataset&) -> Eigen::VectorXd { return Eigen::VectorXd::Ones(2); };
  CHECK(error_code_of([&] { crossfit_estimate(d, 2, fixed_nuisance(bad, constant(0.0)), 1, 0.05); }) ==
        ErrorCode::DimensionMismatch);
}
