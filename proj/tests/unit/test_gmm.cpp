#include "doctest.h"

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "spc/dgp.hpp"
#include "spc/gmm.hpp"
#include "spc/linalg.hpp"

using namespace spc;
using spc::test::error_code_of;

namespace {

const FeatureMap kLinY = FeatureMap::parse("y", "1,y");
const FeatureMap kLinW = FeatureMap::parse("w", "1,w");

MomentSpec linear_spec(MomentKind kind) {
  MomentSpec s;
  s.kind = kind;
  s.basis.s_y = kLinY;
  s.basis.r_w = kLinW;
  s.basis.s_w = kLinW;
  s.basis.r_y = kLinY;
  return s;
}

GeneratedData gaussian(Eigen::Index n, std::uint64_t seed, double tau = 1.0) {
  DgpSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.tau = tau;
  return gen_gaussian_a3(spec);
}

// Each column mean of g within 3 Monte Carlo standard errors of zero.
void check_zero_mean(const Eigen::MatrixXd& g) {
  const double n = static_cast<double>(g.rows());
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    const double mean = g.col(c).mean();
    const double sd = std::sqrt((g.col(c).array() - mean).square().sum() / (n - 1.0));
    CAPTURE(c);
    CHECK(std::abs(mean) <= 3.0 * sd / std::sqrt(n) + 1e-15);
  }
}

double objective(const MomentData& md, const MomentSpec& spec, const Eigen::VectorXd& theta,
                 const Eigen::MatrixXd& omega, double lambda) {
  const Eigen::VectorXd gbar = moment_matrix(md, theta, spec).colwise().mean().transpose();
  double pen = 0.0;
  const ThetaLayout l = theta_layout(spec);
  for (Eigen::Index i = 1; i < l.alpha_size; ++i) pen += theta[l.alpha_begin + i] * theta[l.alpha_begin + i];
  for (Eigen::Index i = 1; i < l.eta_size; ++i) pen += theta[l.eta_begin + i] * theta[l.eta_begin + i];
  return gbar.dot(omega * gbar) + lambda * pen;
}

// theta* = (psi1*, psi0*, alpha*, eta*) on the Gaussian design with tau = 1.
Eigen::VectorXd true_theta(const MomentSpec& spec) {
  const ThetaLayout l = theta_layout(spec);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(l.size());
  t[0] = 1.25;
  t[1] = 0.25;
  if (l.alpha_size == 2) {
    t[l.alpha_begin] = -0.03125;
    t[l.alpha_begin + 1] = 0.25;
  }
  if (l.eta_size == 2) t[l.eta_begin + 1] = 1.0;
  return t;
}

}  // namespace

TEST_CASE("expit is stable in both tails") {
  CHECK(expit(0.0) == 0.5);
  CHECK(expit(-800.0) == 0.0);
  CHECK(expit(800.0) == 1.0);
  CHECK(expit(-30.0) == doctest::Approx(std::exp(-30.0)).epsilon(1e-12));
  CHECK(expit(2.0) + expit(-2.0) == doctest::Approx(1.0));
}

TEST_CASE("basis descriptors round-trip through the parser") {
  const BasisSpec d = BasisSpec::defaults(2, 1);
  CHECK(d.s_y.descriptors() == std::vector<std::string>{"1", "y", "x1"});
  CHECK(d.r_y.descriptors() == std::vector<std::string>{"1", "y", "x1", "y*x1"});
  CHECK(d.s_w.descriptors() == std::vector<std::string>{"1", "w1", "w2", "x1"});
  CHECK(d.r_w.descriptors() == std::vector<std::string>{"1", "w1", "w2", "x1", "w1*x1", "w2*x1"});
  for (const FeatureMap* m : {&d.s_y, &d.r_y}) {
    std::string joined;
    for (const auto& s : m->descriptors()) joined += (joined.empty() ? "" : ",") + s;
    CHECK(FeatureMap::parse("y", joined).descriptors() == m->descriptors());
  }
  CHECK(FeatureMap::parse("y", "none").empty());
  CHECK(FeatureMap::parse("y", "1,y^2").descriptors() == std::vector<std::string>{"1", "y^2"});
  CHECK(error_code_of([] { FeatureMap::parse("y", "1,z"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("EPS moments at alpha = 0") {
  const GeneratedData g = gaussian(50, 1);
  const MomentSpec spec = linear_spec(MomentKind::EPS);
  const MomentData md = MomentData::build(g.data, spec);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(4);
  theta << 0.3, -0.2, 0.0, 0.0;
  for (Eigen::Index i = 0; i < md.size(); ++i) {
    const Eigen::VectorXd m = moment_ps(md, i, theta, spec);
    const double a = md.a[i];
    const double w = g.data.w(i, 0);
    CHECK(m[0] == doctest::Approx(a * (md.y[i] - 0.3)));
    CHECK(m[2] == doctest::Approx(2.0 * (1.0 - a) - 1.0));
    CHECK(m[3] == doctest::Approx((2.0 * (1.0 - a) - 1.0) * w));
    if (a == 1.0) {
      CHECK(m[1] == 0.0);
      CHECK(m[2] == -1.0);  // only the -1 survives
    } else {
      CHECK(m[1] == doctest::Approx(md.y[i] + 0.2));
    }
  }
  CHECK(error_code_of([&] { moment_or(md, 0, theta, spec); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("moment blocks vanish for the other arm") {
  const GeneratedData g = gaussian(40, 2);
  const MomentSpec spec = linear_spec(MomentKind::Bridge);
  const MomentData md = MomentData::build(g.data, spec);
  Eigen::VectorXd theta(4);
  theta << 0.5, 0.1, 0.2, 0.9;
  for (Eigen::Index i = 0; i < md.size(); ++i) {
    const Eigen::VectorXd m = moment_or(md, i, theta, spec);
    if (md.a[i] == 0.0) {
      CHECK(m[0] == 0.0);
      CHECK(m[1] == 0.0);
    } else {
      CHECK(m[2] == 0.0);
      CHECK(m[3] == 0.0);
    }
  }
}

TEST_CASE("DR moment with unit odds and zero bridge") {
  const GeneratedData g = gaussian(30, 3);
  MomentSpec spec = linear_spec(MomentKind::DoublyRobust);
  const MomentData md = MomentData::build(g.data, spec);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(6);
  theta[1] = 0.7;
  for (Eigen::Index i = 0; i < md.size(); ++i) {
    const Eigen::VectorXd m = moment_dr(md, i, theta, spec);
    CHECK(m[1] == doctest::Approx((1.0 - md.a[i]) * md.y[i] - md.a[i] * 0.7));
  }
}

TEST_CASE("population moments vanish at the true parameters") {
  const GeneratedData g = gaussian(100000, 4);
  SUBCASE("EPS") {
    const MomentSpec spec = linear_spec(MomentKind::EPS);
    check_zero_mean(moment_matrix(MomentData::build(g.data, spec), true_theta(spec), spec));
  }
  SUBCASE("bridge") {
    const MomentSpec spec = linear_spec(MomentKind::Bridge);
    check_zero_mean(moment_matrix(MomentData::build(g.data, spec), true_theta(spec), spec));
  }
  SUBCASE("DR block 2 with the true odds and a wrong bridge") {
    const MomentSpec spec = linear_spec(MomentKind::DoublyRobust);
    Eigen::VectorXd t = true_theta(spec);
    t[4] = 0.4;
    t[5] = -0.3;
    check_zero_mean(moment_matrix(MomentData::build(g.data, spec), t, spec).col(1));
  }
  SUBCASE("DR block 2 with the true bridge and wrong odds") {
    const MomentSpec spec = linear_spec(MomentKind::DoublyRobust);
    Eigen::VectorXd t = true_theta(spec);
    t[2] = 0.2;
    t[3] = -0.5;
    check_zero_mean(moment_matrix(MomentData::build(g.data, spec), t, spec).col(1));
  }
}

TEST_CASE("odds-free EPS fit reproduces arm means and the two-sample SE") {
  const GeneratedData g = gaussian(800, 5);
  MomentSpec spec;
  spec.kind = MomentKind::EPS;
  spec.basis.s_y = FeatureMap("y", {});
  spec.basis.r_w = FeatureMap("w", {});
  const GmmFit fit = fit_gmm(g.data, spec, 0.0, 1);
  double s1 = 0, s0 = 0, n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < g.data.size(); ++i) {
    (g.data.a[i] == 1.0 ? s1 : s0) += g.data.y[i];
    (g.data.a[i] == 1.0 ? n1 : n0) += 1.0;
  }
  const double m1 = s1 / n1, m0 = s0 / n0;
  double v1 = 0, v0 = 0;
  for (Eigen::Index i = 0; i < g.data.size(); ++i) {
    const double y = g.data.y[i];
    if (g.data.a[i] == 1.0) v1 += (y - m1) * (y - m1);
    else v0 += (y - m0) * (y - m0);
  }
  const double se = std::sqrt(v1 / n1 / n1 + v0 / n0 / n0);
  CHECK(fit.theta[0] == doctest::Approx(m1).epsilon(1e-10));
  CHECK(fit.theta[1] == doctest::Approx(m0).epsilon(1e-10));
  CHECK(fit.psi_hat == doctest::Approx(m1 - m0).epsilon(1e-10));
  CHECK(std::abs(fit.psi_se - se) <= 1e-6);
}

TEST_CASE("just-identified bridge fit matches the closed form") {
  const GeneratedData g = gaussian(3000, 6);
  const MomentSpec spec = linear_spec(MomentKind::Bridge);
  const MomentData md = MomentData::build(g.data, spec);
  // E{r_y S_w' | A = 0}^{-1} E{r_y Y | A = 0} accumulated by hand
  Eigen::Matrix2d lhs = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  for (Eigen::Index i = 0; i < g.data.size(); ++i) {
    if (g.data.a[i] != 0.0) continue;
    const Eigen::Vector2d r(1.0, g.data.y[i]);
    const Eigen::Vector2d s(1.0, g.data.w(i, 0));
    lhs += r * s.transpose();
    rhs += r * g.data.y[i];
  }
  const Eigen::Vector2d eta = lhs.inverse() * rhs;
  CHECK((linear_bridge_coefficients(md) - eta).cwiseAbs().maxCoeff() <= 1e-10);
  const GmmFit fit = fit_gmm(g.data, spec, 0.0, 1);
  CHECK(std::abs(fit.theta[2] - eta[0]) <= 1e-6);
  CHECK(std::abs(fit.theta[3] - eta[1]) <= 1e-6);
}

TEST_CASE("exactly identified fits solve the sample moments") {
  const GeneratedData g = gaussian(2000, 7);
  for (MomentKind k : {MomentKind::EPS, MomentKind::Bridge, MomentKind::DoublyRobust}) {
    const MomentSpec spec = linear_spec(k);
    const GmmFit fit = fit_gmm(g.data, spec, 0.0, 1);
    const Eigen::VectorXd gbar =
        moment_matrix(MomentData::build(g.data, spec), fit.theta, spec).colwise().mean().transpose();
    CAPTURE(to_string(k));
    CHECK(gbar.norm() <= 1e-8);
    CHECK_FALSE(fit.flags.non_convergence);
  }
}

TEST_CASE("DR fit on the Gaussian design covers the truth") {
  const GeneratedData g = gaussian(4000, 8);
  const MomentSpec spec = linear_spec(MomentKind::DoublyRobust);
  const GmmFit fit = fit_gmm(g.data, spec, 0.0, 1);
  CHECK(std::abs(fit.psi_hat - 1.0) <= 3.0 * fit.psi_se);
  CHECK(fit.psi_se > 0.0);
}

TEST_CASE("second step does not worsen the objective under its own weight") {
  for (int trial = 0; trial < 5; ++trial) {
    const GeneratedData g = gaussian(1500, 100 + trial);
    MomentSpec spec = linear_spec(MomentKind::DoublyRobust);
    spec.basis.r_y = FeatureMap::parse("y", "1,y,y^2");
    spec.basis.r_w = FeatureMap::parse("w", "1,w,w^2");
    const double lambda = trial * 1e-3;
    GmmOptions one;
    one.two_step = false;
    const GmmFit step1 = fit_gmm(g.data, spec, lambda, 1, one);
    const GmmFit both = fit_gmm(g.data, spec, lambda, 1);
    const MomentData md = MomentData::build(g.data, spec);
    const double j1 = objective(md, spec, step1.theta, both.omega_weight, lambda);
    const double j2 = objective(md, spec, both.theta, both.omega_weight, lambda);
    CHECK(j2 <= j1 * (1.0 + 1e-9) + 1e-15);
    CHECK(j2 == doctest::Approx(both.objective).epsilon(1e-8));
  }
}

TEST_CASE("sandwich variance is symmetric PSD and psi SE reads the psi block") {
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    const GeneratedData g = gaussian(600, seed);
    const MomentSpec spec = linear_spec(MomentKind::DoublyRobust);
    const GmmFit fit = fit_gmm(g.data, spec, 1e-3, 1);
    CHECK(fit.variance.isApprox(fit.variance.transpose()));
    CHECK(symmetric_eigenvalues(fit.variance).minCoeff() >= -1e-8 * std::max(1.0, fit.variance.norm()));
    const double q = fit.variance(0, 0) + fit.variance(1, 1) - 2.0 * fit.variance(0, 1);
    CHECK(fit.psi_se == doctest::Approx(std::sqrt(q / 600.0)).epsilon(1e-12));
    CHECK(fit.psi_se >= 0.0);
  }
}

TEST_CASE("psi SE ignores unrelated entries of a block-diagonal variance") {
  // gmm_variance is built from v = (1, -1, 0, ...); recompute with a padded matrix.
  Eigen::MatrixXd v(4, 4);
  v << 2.0, 0.5, 0, 0, 0.5, 1.0, 0, 0, 0, 0, 7.0, 3.0, 0, 0, 3.0, 9.0;
  Eigen::VectorXd sel = Eigen::VectorXd::Zero(4);
  sel[0] = 1.0;
  sel[1] = -1.0;
  const double base = sel.dot(v * sel);
  v.bottomRightCorner(2, 2) *= 5.0;
  CHECK(sel.dot(v * sel) == base);
}

TEST_CASE("lambda cross-validation rules") {
  const GeneratedData g = gaussian(400, 30);
  const MomentSpec spec = linear_spec(MomentKind::DoublyRobust);
  CHECK(cv_select_lambda(g.data, spec, {0.01}, 1).lambda == 0.01);
  CHECK(error_code_of([&] { cv_select_lambda(g.data, spec, {-1.0, -2.0}, 1); }) == ErrorCode::AllCandidatesFailed);
  CHECK(error_code_of([&] { cv_select_lambda(g.data, spec, {}, 1); }) == ErrorCode::EmptyInput);

  // Without penalized terms every candidate scores the same: the smaller wins.
  MomentSpec flat;
  flat.kind = MomentKind::EPS;
  flat.basis.s_y = FeatureMap::parse("y", "1");
  flat.basis.r_w = FeatureMap::parse("w", "1");
  const LambdaSelection s = cv_select_lambda(g.data, flat, {0.5, 0.1, 0.3}, 1);
  CHECK(s.lambda == 0.1);
  CHECK(s.candidates == std::vector<double>{0.1, 0.3, 0.5});
  CHECK(s.scores[0] == s.scores[2]);

  const LambdaSelection a = cv_select_lambda(g.data, spec, {1e-4, 1e-2, 1.0}, 5);
  const LambdaSelection b = cv_select_lambda(g.data, spec, {1e-4, 1e-2, 1.0}, 5);
  CHECK(a.scores == b.scores);
  std::vector<Eigen::Index> first40(40);
  std::iota(first40.begin(), first40.end(), Eigen::Index{0});
  const LambdaSelection loo = cv_select_lambda(g.data.subset(first40), spec, {1e-4, 1.0}, 5, 0);
  CHECK(loo.scores.size() == 2);
}

TEST_CASE("spec checks") {
  MomentSpec spec = linear_spec(MomentKind::EPS);
  spec.basis.r_w = FeatureMap::parse("w", "1");
  CHECK(error_code_of([&] { check_spec(spec); }) == ErrorCode::InvalidArgument);
  spec = linear_spec(MomentKind::Bridge);
  spec.sensitivity_alpha_w = 0.5;
  CHECK(error_code_of([&] { check_spec(spec); }) == ErrorCode::ConflictingOptions);
}

TEST_CASE("fitted odds and bridge functions") {
  const GeneratedData g = gaussian(500, 31);
  const MomentSpec spec = linear_spec(MomentKind::DoublyRobust);
  const GmmFit fit = fit_gmm(g.data, spec, 0.0, 1);
  const Eigen::VectorXd odds = gmm_odds_function(fit, spec)(g.data);
  const Eigen::VectorXd b = gmm_bridge_function(fit, spec)(g.data);
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(odds[i] == doctest::Approx(std::exp(fit.theta[2] + fit.theta[3] * g.data.y[i])));
    CHECK(b[i] == doctest::Approx(fit.theta[4] + fit.theta[5] * g.data.w(i, 0)));
  }
  CHECK(fit.alpha_coefficient("y").value() == fit.theta[3]);
  CHECK_FALSE(fit.alpha_coefficient("x1").has_value());
  const Eigen::VectorXd inf = gmm_influence(fit, g.data, spec);
  CHECK(std::abs(inf.mean()) < 1e-6);
  // influence-value variance reproduces the sandwich SE
  CHECK(std::sqrt(inf.squaredNorm() / 500.0 / 500.0) == doctest::Approx(fit.psi_se).epsilon(1e-4));
}
