#include "spc/dgp.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "spc/error.hpp"
#include "spc/quadrature.hpp"
#include "spc/rng.hpp"

namespace spc {

std::string to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::GaussianA3: return "gaussian-a3";
    case DgpKind::BinaryDiscrete: return "binary-discrete";
    case DgpKind::RankPreserving: return "rank-preserving";
    case DgpKind::LatentMonotone: return "latent-monotone";
  }
  return "?";
}

DgpKind parse_dgp_kind(const std::string& text) {
  for (const DgpKind k : {DgpKind::GaussianA3, DgpKind::BinaryDiscrete, DgpKind::RankPreserving,
                          DgpKind::LatentMonotone}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown generator kind: " + text);
}

double DgpSpec::param(const std::string& name, double fallback) const {
  const auto it = params.find(name);
  return it == params.end() ? fallback : it->second;
}

UnitFunction TrueDgpFunctions::omega_unit() const {
  return [f = omega_star](const Dataset& d) -> Eigen::VectorXd { return d.y.unaryExpr(f); };
}

UnitFunction TrueDgpFunctions::bridge_unit() const {
  return [f = bridge_star](const Dataset& d) -> Eigen::VectorXd { return d.w.col(0).unaryExpr(f); };
}

double TrueDgpFunctions::cond_density(double y, double w) const {
  const double z = y - cond_slope * w;
  return std::exp(-0.5 * z * z / cond_var) / std::sqrt(2.0 * std::numbers::pi * cond_var);
}

namespace {

void check_n(const DgpSpec& spec) {
  if (spec.n < 1) fail(ErrorCode::InvalidArgument, "sample size must be positive");
}

void check_probability(double p, const char* name) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::InvalidArgument, std::string(name) + " must lie in (0, 1)");
}

double expit_local(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

GeneratedData gen_gaussian_a3(const DgpSpec& spec) {
  check_n(spec);
  const double h = spec.param("hetero", 0.0);
  CounterRng rng(spec.seed);
  GeneratedData out;
  Dataset& d = out.data;
  d.y.resize(spec.n);
  d.a.resize(spec.n);
  d.w.resize(spec.n, 1);
  d.x.resize(spec.n, 0);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const double a = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double y0 = rng.normal(0.25 * a, 1.0);
    const double eps = rng.normal();
    d.a[i] = a;
    d.w(i, 0) = y0 + eps;
    d.y[i] = y0 + a * (spec.tau + h * y0);
  }

  TrueDgpFunctions& t = out.truth;
  t.omega_star = [](double y) { return std::exp(0.25 * y - 0.03125); };
  t.bridge_star = [](double w) { return w; };
  t.w_odds = [](double w) { return std::exp(0.125 * w - 0.015625); };
  t.p_star = [odds = t.w_odds](double w) {
    const double o = odds(w);
    return o / (1.0 + o);
  };
  t.cond_slope = 0.5;
  t.cond_var = 0.5;
  t.psi0_star = 0.25;
  t.psi_star = spec.tau + h * 0.25;
  t.psi1_star = t.psi0_star + t.psi_star;
  return out;
}

double BinaryTables::p_y_given_a(int y, int a) const {
  const double p1 = a == 1 ? p_y1_a1 : p_y1_a0;
  return y == 1 ? p1 : 1.0 - p1;
}

double BinaryTables::p_w_given_y_a(int w, int y, int /*a*/) const {
  const double p1 = y == 1 ? p_w1_y1 : p_w1_y0;
  return w == 1 ? p1 : 1.0 - p1;
}

double BinaryTables::joint(int w, int y, int a) const {
  return (a == 1 ? p_a : 1.0 - p_a) * p_y_given_a(y, a) * p_w_given_y_a(w, y, a);
}

double BinaryTables::p_w1_given_a(int a) const {
  return p_w_given_y_a(1, 0, a) * p_y_given_a(0, a) + p_w_given_y_a(1, 1, a) * p_y_given_a(1, a);
}

Dataset BinaryTables::population(long denominator) const {
  if (denominator < 1) fail(ErrorCode::InvalidArgument, "denominator must be positive");
  std::vector<std::array<int, 3>> rows;
  for (int a = 0; a <= 1; ++a) {
    for (int y = 0; y <= 1; ++y) {
      for (int w = 0; w <= 1; ++w) {
        const double mass = joint(w, y, a) * static_cast<double>(denominator);
        const double count = std::round(mass);
        if (std::abs(mass - count) > 1e-6) {
          fail(ErrorCode::InvalidArgument, "cell mass is not a multiple of 1/denominator");
        }
        for (long c = 0; c < static_cast<long>(count); ++c) rows.push_back({y, a, w});
      }
    }
  }
  Dataset d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.y.resize(n);
  d.a.resize(n);
  d.w.resize(n, 1);
  d.x.resize(n, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.y[i] = rows[static_cast<std::size_t>(i)][0];
    d.a[i] = rows[static_cast<std::size_t>(i)][1];
    d.w(i, 0) = rows[static_cast<std::size_t>(i)][2];
  }
  return d;
}

BinaryBridge binary_bridge_closed_form(double p_w1_y1, double p_w1_y0) {
  const double delta = p_w1_y1 - p_w1_y0;
  if (!(std::abs(delta) >= 1e-12)) {
    fail(ErrorCode::RelevanceViolation, "Pr(W=1 | Y=1) equals Pr(W=1 | Y=0)");
  }
  return {-p_w1_y0 / delta, (1.0 - p_w1_y0) / delta};
}

BinaryGenerated gen_binary_discrete(const DgpSpec& spec) {
  check_n(spec);
  BinaryGenerated out;
  BinaryTables& t = out.tables;
  t.p_a = spec.param("p_a", 0.5);
  t.p_y1_a0 = spec.param("p_y1_a0", 0.4);
  t.p_y1_a1 = spec.param("p_y1_a1", 0.5);
  t.p_w1_y0 = spec.param("p_w1_y0", 0.3);
  t.p_w1_y1 = spec.param("p_w1_y1", 0.8);
  check_probability(t.p_a, "p_a");
  check_probability(t.p_y1_a0, "p_y1_a0");
  check_probability(t.p_y1_a1, "p_y1_a1");
  check_probability(t.p_w1_y0, "p_w1_y0");
  check_probability(t.p_w1_y1, "p_w1_y1");
  const BinaryBridge b = binary_bridge_closed_form(t.p_w1_y1, t.p_w1_y0);
  out.b0 = b.b0;
  out.b1 = b.b1;
  out.psi0_star = t.psi0_star();
  out.psi_star = spec.tau;

  CounterRng rng(spec.seed);
  Dataset& d = out.data;
  d.y.resize(spec.n);
  d.a.resize(spec.n);
  d.w.resize(spec.n, 1);
  d.x.resize(spec.n, 0);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const int a = rng.bernoulli(t.p_a) ? 1 : 0;
    const int y0 = rng.bernoulli(a == 1 ? t.p_y1_a1 : t.p_y1_a0) ? 1 : 0;
    const int w = rng.bernoulli(y0 == 1 ? t.p_w1_y1 : t.p_w1_y0) ? 1 : 0;
    d.a[i] = a;
    d.w(i, 0) = w;
    d.y[i] = y0 + spec.tau * a;
  }
  return out;
}

DiscreteBridge brute_force_bridge_discrete(const DiscreteJoint& joint) {
  const Eigen::Index nw = joint.w_values.size();
  const Eigen::Index ny = joint.y_values.size();
  if (joint.mass.rows() != nw || joint.mass.cols() != ny) {
    fail(ErrorCode::DimensionMismatch, "mass table does not match the supports");
  }
  if (nw == 0 || ny == 0) fail(ErrorCode::EmptyInput, "empty support");
  if ((joint.mass.array() < 0.0).any() || !joint.mass.allFinite()) {
    fail(ErrorCode::InvalidArgument, "masses must be finite and non-negative");
  }
  // Row y of the system holds Pr(W = . | Y = y, A = 0).
  Eigen::MatrixXd cond(ny, nw);
  for (Eigen::Index j = 0; j < ny; ++j) {
    const double col_mass = joint.mass.col(j).sum();
    if (!(col_mass > 0.0)) fail(ErrorCode::InvalidArgument, "outcome value with zero mass");
    cond.row(j) = joint.mass.col(j).transpose() / col_mass;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(cond.rows(), cond.cols());
  cod.setThreshold(1e-12);
  cod.compute(cond);
  DiscreteBridge out;
  out.values = cod.solve(joint.y_values);
  out.rank = cod.rank();
  out.non_unique = out.rank < nw;
  out.residual = (cond * out.values - joint.y_values).cwiseAbs().maxCoeff();
  if (!(out.residual <= kBridgeFeasibilityTol)) {
    fail(ErrorCode::Infeasible, "no bridge solves the moment equation");
  }
  return out;
}

Dataset gen_rank_preserving(const DgpSpec& spec, Eigen::VectorXd* y0_out) {
  check_n(spec);
  CounterRng rng(spec.seed);
  Dataset d;
  d.y.resize(spec.n);
  d.a.resize(spec.n);
  d.w.resize(spec.n, 1);
  d.x.resize(spec.n, 1);
  if (y0_out) y0_out->resize(spec.n);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const double x = rng.normal();
    const double y0 = 0.5 * x + rng.normal();
    const double a = rng.bernoulli(expit_local(-0.2 + 0.6 * y0 + 0.3 * x)) ? 1.0 : 0.0;
    const double w = 0.5 + 0.8 * y0 + 0.3 * x + rng.normal();
    d.x(i, 0) = x;
    d.a[i] = a;
    d.w(i, 0) = w;
    d.y[i] = y0 + spec.tau * a;
    if (y0_out) (*y0_out)[i] = y0;
  }
  return d;
}

Dataset gen_latent_monotone(const DgpSpec& spec) {
  check_n(spec);
  CounterRng rng(spec.seed);
  Dataset d;
  d.y.resize(spec.n);
  d.a.resize(spec.n);
  d.w.resize(spec.n, 1);
  d.x.resize(spec.n, 0);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    const double u = rng.normal();
    const double a = rng.bernoulli(expit_local(0.8 * u)) ? 1.0 : 0.0;
    const double y0 = u + 0.2 * u * u * u;
    d.a[i] = a;
    d.w(i, 0) = u + rng.normal();
    d.y[i] = y0 + spec.tau * a;
  }
  return d;
}

double result1_identity_check(const TrueDgpFunctions& fns, const std::vector<double>& w_grid) {
  if (!fns.omega_star || !fns.w_odds) fail(ErrorCode::InvalidArgument, "missing odds functions");
  if (!(fns.cond_var > 0.0)) fail(ErrorCode::InvalidArgument, "conditional law is not set");
  const GaussHermiteRule rule = gauss_hermite(64);
  const double sd = std::sqrt(fns.cond_var);
  double worst = 0.0;
  for (const double w : w_grid) {
    const double lhs = normal_expectation(fns.omega_star, fns.cond_slope * w, sd, rule);
    worst = std::max(worst, std::abs(lhs - fns.w_odds(w)));
  }
  return worst;
}

}  // namespace spc
