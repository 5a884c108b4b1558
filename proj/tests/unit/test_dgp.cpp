#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "spc/dgp.hpp"
#include "spc/quadrature.hpp"
#include "spc/semiparametric.hpp"

using namespace spc;
using spc::test::error_code_of;

namespace {

DgpSpec make_spec(DgpKind kind, Eigen::Index n, std::uint64_t seed, double tau) {
  DgpSpec s;
  s.kind = kind;
  s.n = n;
  s.seed = seed;
  s.tau = tau;
  return s;
}

double normal_pdf(double x, double m, double var) {
  return std::exp(-0.5 * (x - m) * (x - m) / var) / std::sqrt(2.0 * M_PI * var);
}

}  // namespace

TEST_CASE("Gaussian design true functions") {
  const GeneratedData g = gen_gaussian_a3(make_spec(DgpKind::GaussianA3, 10, 1, 0.0));
  CHECK(g.truth.omega_star(0.0) == doctest::Approx(0.96923).epsilon(1e-5));
  CHECK(g.truth.w_odds(0.0) == doctest::Approx(0.98450).epsilon(1e-5));
  CHECK(g.truth.psi_star == 0.0);
  CHECK(g.truth.psi0_star == 0.25);
  // Density-ratio oracles.
  for (double v = -3.0; v <= 3.0; v += 0.5) {
    CHECK(g.truth.omega_star(v) == doctest::Approx(normal_pdf(v, 0.25, 1.0) / normal_pdf(v, 0.0, 1.0)));
    CHECK(g.truth.w_odds(v) == doctest::Approx(normal_pdf(v, 0.25, 2.0) / normal_pdf(v, 0.0, 2.0)));
    CHECK(g.truth.bridge_star(v) == v);
  }
  CHECK(g.truth.cond_density(0.3, 1.0) == doctest::Approx(normal_pdf(0.3, 0.5, 0.5)));
}

TEST_CASE("Gaussian design samples") {
  const GeneratedData g = gen_gaussian_a3(make_spec(DgpKind::GaussianA3, 200000, 2, 0.0));
  validate_dataset(g.data);
  double s1 = 0, n1 = 0, s0 = 0, n0 = 0, sw = 0, sy = 0, swy = 0;
  for (Eigen::Index i = 0; i < g.data.size(); ++i) {
    const double y = g.data.y[i], w = g.data.w(i, 0);
    if (g.data.a[i] == 1.0) {
      s1 += y;
      n1 += 1;
    } else {
      s0 += y;
      n0 += 1;
      sw += w;
      sy += y;
      swy += w * y;
    }
  }
  CHECK(std::abs(s1 / n1 - 0.25) <= 0.02);
  CHECK(std::abs(s0 / n0) <= 0.02);
  CHECK(n1 / (n0 + n1) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(swy / n0 - (sw / n0) * (sy / n0) > 0.9);  // cov(W, Y | A = 0) = 1
}

TEST_CASE("proxy relevance holds at moderate samples") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GeneratedData g = gen_gaussian_a3(make_spec(DgpKind::GaussianA3, 500, seed, 0.0));
    double n0 = 0, sw = 0, sy = 0, swy = 0;
    for (Eigen::Index i = 0; i < g.data.size(); ++i) {
      if (g.data.a[i] != 0.0) continue;
      n0 += 1;
      sw += g.data.w(i, 0);
      sy += g.data.y[i];
      swy += g.data.w(i, 0) * g.data.y[i];
    }
    CHECK(swy / n0 - (sw / n0) * (sy / n0) > 0.0);
  }
}

TEST_CASE("heterogeneous effect gives the treated-average contrast") {
  DgpSpec s = make_spec(DgpKind::GaussianA3, 400000, 3, 0.5);
  s.params["hetero"] = 0.8;
  const GeneratedData g = gen_gaussian_a3(s);
  CHECK(g.truth.psi_star == doctest::Approx(0.5 + 0.8 * 0.25));
  double s1 = 0, n1 = 0;
  for (Eigen::Index i = 0; i < g.data.size(); ++i) {
    if (g.data.a[i] == 1.0) {
      s1 += g.data.y[i];
      n1 += 1;
    }
  }
  CHECK(std::abs(s1 / n1 - g.truth.psi1_star) <= 0.01);
}

TEST_CASE("Result 1 identity on the Gaussian design") {
  const GeneratedData g = gen_gaussian_a3(make_spec(DgpKind::GaussianA3, 10, 4, 0.0));
  std::vector<double> grid;
  for (double w = -3.0; w <= 3.0 + 1e-12; w += 0.5) grid.push_back(w);
  CHECK(result1_identity_check(g.truth, grid) <= 1e-6);

  const GaussHermiteRule rule = gauss_hermite(64);
  const double lhs = normal_expectation(g.truth.omega_star, 0.0, std::sqrt(0.5), rule);
  CHECK(lhs == doctest::Approx(0.98450).epsilon(1e-5));

  TrueDgpFunctions perturbed = g.truth;
  perturbed.omega_star = [](double y) { return std::exp(0.3 * y - 0.03125); };
  CHECK(result1_identity_check(perturbed, grid) > 1e-3);
}

TEST_CASE("Gauss-Hermite moments") {
  const GaussHermiteRule rule = gauss_hermite(32);
  CHECK(rule.weights.sum() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
  CHECK(normal_expectation([](double z) { return z * z; }, 0.0, 1.0, rule) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(normal_expectation([](double z) { return z * z * z * z; }, 0.0, 1.0, rule) ==
        doctest::Approx(3.0).epsilon(1e-12));
  CHECK(normal_expectation([](double z) { return z; }, 1.5, 2.0, rule) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(normal_expectation([](double z) { return std::exp(z); }, 0.0, 1.0, rule) ==
        doctest::Approx(std::exp(0.5)).epsilon(1e-12));
}

TEST_CASE("binary closed-form bridge") {
  const BinaryBridge b = binary_bridge_closed_form(0.8, 0.3);
  CHECK(b.b1 == doctest::Approx(1.4).epsilon(1e-14));
  CHECK(b.b0 == doctest::Approx(-0.6).epsilon(1e-14));
  CHECK(0.8 * b.b1 + 0.2 * b.b0 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(0.3 * b.b1 + 0.7 * b.b0 == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));

  const BinaryBridge flip = binary_bridge_closed_form(0.3, 0.8);
  CHECK(flip.b0 == doctest::Approx(1.6));
  CHECK(flip.b1 == doctest::Approx(-0.4));
  CHECK(0.3 * flip.b1 + 0.7 * flip.b0 == doctest::Approx(1.0));

  const BinaryBridge perfect = binary_bridge_closed_form(1.0, 0.0);
  CHECK(perfect(0.0) == 0.0);
  CHECK(perfect(1.0) == 1.0);

  CHECK(error_code_of([] { binary_bridge_closed_form(0.4, 0.4); }) == ErrorCode::RelevanceViolation);
}

TEST_CASE("binary display value of psi0") {
  BinaryTables t;
  t.p_w1_y1 = 0.8;
  t.p_w1_y0 = 0.3;
  t.p_y1_a1 = 0.5;
  CHECK(t.p_w1_given_a(1) == doctest::Approx(0.55));
  const double display = (t.p_w1_given_a(1) - 0.3) / 0.5;
  CHECK(display == doctest::Approx(0.5));
  CHECK(t.psi0_star() == doctest::Approx(display));
}

TEST_CASE("binary tables satisfy conditional independence and normalize") {
  BinaryTables t;
  t.p_a = 0.3;
  t.p_y1_a0 = 0.2;
  t.p_y1_a1 = 0.7;
  double total = 0.0;
  for (int a = 0; a <= 1; ++a) {
    for (int y = 0; y <= 1; ++y) {
      CHECK(t.p_w_given_y_a(1, y, 0) == t.p_w_given_y_a(1, y, 1));
      for (int w = 0; w <= 1; ++w) total += t.joint(w, y, a);
      // Conditional from the joint.
      const double py = t.joint(0, y, a) + t.joint(1, y, a);
      CHECK(t.joint(1, y, a) / py == doctest::Approx(t.p_w_given_y_a(1, y, a)));
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("binary population reproduces the table exactly") {
  BinaryTables t;
  t.p_a = 0.5;
  t.p_y1_a0 = 0.4;
  t.p_y1_a1 = 0.5;
  const Dataset pop = t.population(1000);
  validate_dataset(pop);
  CHECK(pop.size() == 1000);
  double c = 0;
  for (Eigen::Index i = 0; i < pop.size(); ++i) c += (pop.a[i] == 1.0 && pop.y[i] == 1.0 && pop.w(i, 0) == 1.0);
  CHECK(c / 1000.0 == doctest::Approx(t.joint(1, 1, 1)).epsilon(1e-12));
  CHECK(error_code_of([&] { t.population(7); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("binary generator") {
  DgpSpec s = make_spec(DgpKind::BinaryDiscrete, 100000, 5, 0.0);
  const BinaryGenerated g = gen_binary_discrete(s);
  validate_dataset(g.data);
  CHECK(g.b1 == doctest::Approx(1.4));
  CHECK(g.b0 == doctest::Approx(-0.6));
  CHECK(g.psi_star == 0.0);
  const UnitFunction b = [&](const Dataset& d) -> Eigen::VectorXd {
    return (g.b0 + (g.b1 - g.b0) * d.w.col(0).array()).matrix();
  };
  CHECK(std::abs(plugin_psi0_bridge(g.data, b) - g.psi0_star) <= 0.02);

  s.params["p_w1_y1"] = 0.3;
  CHECK(error_code_of([&] { gen_binary_discrete(s); }) == ErrorCode::RelevanceViolation);
  s.params["p_w1_y1"] = 1.5;
  CHECK(error_code_of([&] { gen_binary_discrete(s); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("brute-force bridge on a 2x2 table matches the closed form") {
  DiscreteJoint j;
  j.w_values = Eigen::Vector2d(0, 1);
  j.y_values = Eigen::Vector2d(0, 1);
  j.mass.resize(2, 2);
  // Pr(W, Y | A = 0) with Pr(Y = 1) = 0.4.
  j.mass << 0.7 * 0.6, 0.2 * 0.4, 0.3 * 0.6, 0.8 * 0.4;
  const DiscreteBridge b = brute_force_bridge_discrete(j);
  const BinaryBridge cf = binary_bridge_closed_form(0.8, 0.3);
  CHECK(std::abs(b.values[0] - cf.b0) <= 1e-12);
  CHECK(std::abs(b.values[1] - cf.b1) <= 1e-12);
  CHECK_FALSE(b.non_unique);
  CHECK(b.residual <= 1e-10);
}

TEST_CASE("brute-force bridge on an under-determined table") {
  DiscreteJoint j;
  j.w_values = Eigen::Vector3d(0, 1, 2);
  j.y_values = Eigen::Vector2d(0, 1);
  Eigen::MatrixXd cond(3, 2);  // Pr(W = w | Y = y)
  cond << 0.5, 0.1, 0.3, 0.3, 0.2, 0.6;
  const Eigen::Vector2d py(0.6, 0.4);
  j.mass = cond * py.asDiagonal();
  const DiscreteBridge b = brute_force_bridge_discrete(j);
  CHECK(b.non_unique);
  CHECK(b.rank == 2);
  CHECK(b.residual <= 1e-10);
  CHECK((cond.transpose() * b.values - j.y_values).cwiseAbs().maxCoeff() <= 1e-10);

  // Any other solution gives the same plug-in under W independent of A given Y.
  Eigen::FullPivLU<Eigen::MatrixXd> lu(cond.transpose());
  const Eigen::VectorXd null = lu.kernel().col(0);
  const Eigen::Vector2d py_treated(0.3, 0.7);
  const Eigen::VectorXd pw_treated = cond * py_treated;
  const double base = pw_treated.dot(b.values);
  for (double t : {-3.0, 0.5, 10.0}) {
    const Eigen::VectorXd other = b.values + t * null;
    CHECK((cond.transpose() * other - j.y_values).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(pw_treated.dot(other) == doctest::Approx(base).epsilon(1e-12));
  }
  CHECK(base == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("brute-force bridge with an irrelevant proxy is infeasible") {
  DiscreteJoint j;
  j.w_values = Eigen::Vector2d(0, 1);
  j.y_values = Eigen::Vector2d(0, 1);
  j.mass.resize(2, 2);
  j.mass << 0.3 * 0.5, 0.3 * 0.5, 0.7 * 0.5, 0.7 * 0.5;
  CHECK(error_code_of([&] { brute_force_bridge_discrete(j); }) == ErrorCode::Infeasible);
  j.mass.resize(3, 2);
  CHECK(error_code_of([&] { brute_force_bridge_discrete(j); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("rank-preserving generator has an exact constant effect") {
  Eigen::VectorXd y0;
  const Dataset d = gen_rank_preserving(make_spec(DgpKind::RankPreserving, 2000, 6, 1.25), &y0);
  validate_dataset(d);
  CHECK(d.x.cols() == 1);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    CHECK(d.y[i] == y0[i] + 1.25 * d.a[i]);
    CHECK(std::abs(d.y[i] - y0[i] - 1.25 * d.a[i]) <= 1e-14);
  }

  Eigen::VectorXd y0b;
  const Dataset z = gen_rank_preserving(make_spec(DgpKind::RankPreserving, 2000, 6, 0.0), &y0b);
  CHECK(z.y == y0b);
  CHECK(y0b == y0);
}

TEST_CASE("every generator passes validation and is seed-deterministic") {
  for (const DgpKind k : {DgpKind::GaussianA3, DgpKind::BinaryDiscrete, DgpKind::RankPreserving,
                          DgpKind::LatentMonotone}) {
    CHECK(parse_dgp_kind(to_string(k)) == k);
    const DgpSpec s = make_spec(k, 300, 7, 0.5);
    Dataset a, b;
    switch (k) {
      case DgpKind::GaussianA3: a = gen_gaussian_a3(s).data; b = gen_gaussian_a3(s).data; break;
      case DgpKind::BinaryDiscrete: a = gen_binary_discrete(s).data; b = gen_binary_discrete(s).data; break;
      case DgpKind::RankPreserving: a = gen_rank_preserving(s); b = gen_rank_preserving(s); break;
      case DgpKind::LatentMonotone: a = gen_latent_monotone(s); b = gen_latent_monotone(s); break;
    }
    validate_dataset(a);
    CHECK(a.y == b.y);
    CHECK(a.w == b.w);
    CHECK(a.size() == 300);
  }
  CHECK(error_code_of([] { parse_dgp_kind("nope"); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([] { gen_gaussian_a3(make_spec(DgpKind::GaussianA3, 0, 1, 0)); }) ==
        ErrorCode::InvalidArgument);
}
