#include "spc/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spc/error.hpp"
#include "spc/linalg.hpp"
#include "spc/parallel.hpp"
#include "spc/rng.hpp"
#include "spc/stats.hpp"

namespace spc {

namespace {

constexpr double kMaxLogOdds = 700.0;

Eigen::MatrixXd column(const Eigen::VectorXd& v) { return Eigen::MatrixXd(v); }

std::vector<Eigen::Index> penalized_indices(const MomentSpec& spec, const ThetaLayout& layout) {
  std::vector<Eigen::Index> out;
  if (spec.uses_odds()) {
    const auto& t = spec.basis.s_y.terms();
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i].kind != FeatureTerm::Kind::Intercept) out.push_back(layout.alpha_begin + static_cast<Eigen::Index>(i));
    }
  }
  if (spec.uses_bridge()) {
    const auto& t = spec.basis.s_w.terms();
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i].kind != FeatureTerm::Kind::Intercept) out.push_back(layout.eta_begin + static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

Eigen::VectorXd log_odds(const MomentData& md, const Eigen::VectorXd& theta, const ThetaLayout& layout) {
  Eigen::VectorXd z = md.s_y * theta.segment(layout.alpha_begin, layout.alpha_size);
  z += md.offset;
  return z.cwiseMin(kMaxLogOdds).cwiseMax(-kMaxLogOdds);
}

Eigen::VectorXd mean_moment(const MomentData& md, const Eigen::VectorXd& theta, const MomentSpec& spec) {
  return moment_matrix(md, theta, spec).colwise().mean().transpose();
}

Eigen::MatrixXd second_moment(const Eigen::MatrixXd& g) {
  return (g.transpose() * g) / static_cast<double>(g.rows());
}

// Central-difference Jacobian of the mean moment vector.
Eigen::MatrixXd mean_moment_jacobian(const MomentData& md, const Eigen::VectorXd& theta, const MomentSpec& spec) {
  const Eigen::Index p = theta.size();
  Eigen::MatrixXd jac;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = 1e-5 * (1.0 + std::abs(theta[j]));
    Eigen::VectorXd up = theta;
    Eigen::VectorXd dn = theta;
    up[j] += h;
    dn[j] -= h;
    const Eigen::VectorXd col = (mean_moment(md, up, spec) - mean_moment(md, dn, spec)) / (up[j] - dn[j]);
    if (j == 0) jac.resize(col.size(), p);
    jac.col(j) = col;
  }
  return jac;
}

struct SymmetricSqrt {
  Eigen::MatrixXd root;  // root' root = omega
};

SymmetricSqrt weight_root(const Eigen::MatrixXd& omega) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (omega + omega.transpose()));
  const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return {s.asDiagonal() * es.eigenvectors().transpose()};
}

struct PseudoInverse {
  Eigen::MatrixXd inverse;
  bool singular = false;
};

PseudoInverse symmetric_pinv(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  bool singular = !(top > 0.0);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i]) > kPinvRtol * top && top > 0.0) {
      inv[i] = 1.0 / ev[i];
    } else {
      singular = true;
    }
  }
  return {es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose(), singular};
}

class PenalizedObjective {
 public:
  PenalizedObjective(const MomentData& md, const MomentSpec& spec, const Eigen::MatrixXd& omega, double lambda,
                     std::vector<Eigen::Index> pen)
      : md_(md), spec_(spec), root_(weight_root(omega).root), sqrt_lambda_(std::sqrt(lambda)), pen_(std::move(pen)) {}

  Eigen::VectorXd residual(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd gbar = mean_moment(md_, theta, spec_);
    Eigen::VectorXd r(root_.rows() + static_cast<Eigen::Index>(pen_.size()));
    r.head(root_.rows()) = root_ * gbar;
    for (std::size_t i = 0; i < pen_.size(); ++i) r[root_.rows() + static_cast<Eigen::Index>(i)] = sqrt_lambda_ * theta[pen_[i]];
    return r;
  }

  double value(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd r = residual(theta);
    const double v = r.squaredNorm();
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta) const {
    const Eigen::MatrixXd gj = mean_moment_jacobian(md_, theta, spec_);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(root_.rows() + static_cast<Eigen::Index>(pen_.size()), theta.size());
    j.topRows(root_.rows()) = root_ * gj;
    for (std::size_t i = 0; i < pen_.size(); ++i) j(root_.rows() + static_cast<Eigen::Index>(i), pen_[i]) = sqrt_lambda_;
    return j;
  }

 private:
  const MomentData& md_;
  const MomentSpec& spec_;
  Eigen::MatrixXd root_;
  double sqrt_lambda_;
  std::vector<Eigen::Index> pen_;
};

struct MinimizeResult {
  Eigen::VectorXd theta;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt on the stacked residual of the penalized quadratic form.
MinimizeResult minimize(const PenalizedObjective& obj, Eigen::VectorXd theta, const GmmOptions& opt) {
  MinimizeResult res;
  double value = obj.value(theta);
  if (!std::isfinite(value)) fail(ErrorCode::NumericalFailure, "GMM objective is not finite at the starting value");
  double mu = -1.0;
  int it = 0;
  bool converged = false;
  while (it < opt.max_iterations) {
    ++it;
    if (value < 1e-30) {
      converged = true;
      break;
    }
    const Eigen::VectorXd r = obj.residual(theta);
    const Eigen::MatrixXd j = obj.jacobian(theta);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd grad = j.transpose() * r;
    if (!grad.allFinite() || !jtj.allFinite()) fail(ErrorCode::NumericalFailure, "GMM Jacobian is not finite");
    const Eigen::VectorXd scale = jtj.diagonal().cwiseMax(1e-12 * std::max(1.0, jtj.diagonal().maxCoeff()));
    if (mu < 0.0) mu = 1e-3;
    bool accepted = false;
    while (mu < 1e16) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal() += mu * scale;
      const Eigen::VectorXd step = lhs.ldlt().solve(-grad);
      const Eigen::VectorXd trial = theta + step;
      const double tv = step.allFinite() ? obj.value(trial) : std::numeric_limits<double>::infinity();
      if (tv < value) {
        const double decrease = value - tv;
        theta = trial;
        const double old = value;
        value = tv;
        // Small decreases under heavy damping only mean the step was short.
        if (decrease <= opt.rel_tolerance * old && mu <= 1.0) converged = true;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        break;
      }
      mu *= 4.0;
    }
    if (!accepted) {
      // No descent direction left at working precision.
      converged = true;
    }
    if (converged) break;
  }
  res.theta = theta;
  res.value = value;
  res.iterations = it;
  res.converged = converged;
  return res;
}

}  // namespace

BasisSpec BasisSpec::defaults(int w_dim, int x_dim) {
  BasisSpec b;
  b.s_y = linear_basis("y", 1, x_dim);
  b.r_y = interacted_basis("y", 1, x_dim);
  b.s_w = linear_basis("w", w_dim, x_dim);
  b.r_w = interacted_basis("w", w_dim, x_dim);
  return b;
}

std::string to_string(MomentKind kind) {
  switch (kind) {
    case MomentKind::EPS: return "eps";
    case MomentKind::Bridge: return "bridge";
    case MomentKind::DoublyRobust: return "dr";
  }
  return "?";
}

ThetaLayout theta_layout(const MomentSpec& spec) {
  ThetaLayout l;
  l.alpha_begin = 2;
  l.alpha_size = spec.uses_odds() ? static_cast<Eigen::Index>(spec.basis.s_y.size()) : 0;
  l.eta_begin = l.alpha_begin + l.alpha_size;
  l.eta_size = spec.uses_bridge() ? static_cast<Eigen::Index>(spec.basis.s_w.size()) : 0;
  return l;
}

void check_spec(const MomentSpec& spec) {
  if (spec.uses_odds() && spec.basis.r_w.size() < spec.basis.s_y.size()) {
    fail(ErrorCode::InvalidArgument, "odds instruments r_w must have at least as many terms as S_y");
  }
  if (spec.uses_bridge() && spec.basis.r_y.size() < spec.basis.s_w.size()) {
    fail(ErrorCode::InvalidArgument, "bridge instruments r_y must have at least as many terms as S_w");
  }
  if (spec.sensitivity_active() && spec.kind == MomentKind::Bridge) {
    fail(ErrorCode::ConflictingOptions, "sensitivity offsets apply only to odds-based moment systems");
  }
  if (!std::isfinite(spec.sensitivity_alpha_w)) fail(ErrorCode::InvalidArgument, "sensitivity parameter is not finite");
}

MomentData MomentData::build(const Dataset& data, const MomentSpec& spec) {
  MomentData md;
  md.y = data.y;
  md.a = data.a;
  const Eigen::MatrixXd ycol = column(data.y);
  if (spec.uses_odds()) {
    md.s_y = spec.basis.s_y.evaluate(ycol, data.x);
    md.r_w = spec.basis.r_w.evaluate(data.w, data.x);
  } else {
    md.s_y.resize(data.size(), 0);
    md.r_w.resize(data.size(), 0);
  }
  if (spec.uses_bridge()) {
    md.s_w = spec.basis.s_w.evaluate(data.w, data.x);
    md.r_y = spec.basis.r_y.evaluate(ycol, data.x);
  } else {
    md.s_w.resize(data.size(), 0);
    md.r_y.resize(data.size(), 0);
  }
  md.offset = Eigen::VectorXd::Zero(data.size());
  if (spec.sensitivity_active()) {
    const Eigen::MatrixXd f = spec.sensitivity_feature.evaluate(data.w, data.x);
    if (f.cols() != 1) fail(ErrorCode::InvalidArgument, "sensitivity feature must be one-dimensional");
    md.offset = spec.sensitivity_alpha_w * f.col(0);
  }
  return md;
}

MomentData MomentData::subset(const std::vector<Eigen::Index>& rows) const {
  MomentData out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  out.y.resize(m);
  out.a.resize(m);
  out.offset.resize(m);
  out.s_y.resize(m, s_y.cols());
  out.s_w.resize(m, s_w.cols());
  out.r_y.resize(m, r_y.cols());
  out.r_w.resize(m, r_w.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index i = rows[static_cast<std::size_t>(r)];
    out.y[r] = y[i];
    out.a[r] = a[i];
    out.offset[r] = offset[i];
    out.s_y.row(r) = s_y.row(i);
    out.s_w.row(r) = s_w.row(i);
    out.r_y.row(r) = r_y.row(i);
    out.r_w.row(r) = r_w.row(i);
  }
  return out;
}

double expit(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::MatrixXd moment_matrix(const MomentData& md, const Eigen::VectorXd& theta, const MomentSpec& spec) {
  const ThetaLayout layout = theta_layout(spec);
  if (theta.size() != layout.size()) fail(ErrorCode::DimensionMismatch, "parameter vector has the wrong length");
  const Eigen::Index n = md.size();
  const double psi1 = theta[0];
  const double psi0 = theta[1];
  const Eigen::ArrayXd a = md.a.array();
  const Eigen::ArrayXd ctrl = 1.0 - a;
  const Eigen::ArrayXd y = md.y.array();

  Eigen::ArrayXd odds;
  Eigen::ArrayXd inv_one_minus_pi;  // 1 / (1 - pi) = 1 + odds
  if (spec.uses_odds()) {
    const Eigen::ArrayXd z = log_odds(md, theta, layout).array();
    odds.resize(n);
    inv_one_minus_pi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      // pi / (1 - pi) = exp(z) and 1 / (1 - pi) = 1 + exp(z) avoid the cancellation in 1 - expit(z).
      odds[i] = std::exp(z[i]);
      inv_one_minus_pi[i] = 1.0 + odds[i];
    }
  }
  Eigen::ArrayXd b;
  if (spec.uses_bridge()) b = (md.s_w * theta.segment(layout.eta_begin, layout.eta_size)).array();

  const Eigen::Index q_w = spec.uses_odds() ? md.r_w.cols() : 0;
  const Eigen::Index q_y = spec.uses_bridge() ? md.r_y.cols() : 0;
  Eigen::MatrixXd g(n, 2 + q_w + q_y);
  g.col(0) = (a * (y - psi1)).matrix();
  switch (spec.kind) {
    case MomentKind::EPS:
      g.col(1) = (ctrl * odds * (y - psi0)).matrix();
      break;
    case MomentKind::Bridge:
      g.col(1) = (a * (b - psi0)).matrix();
      break;
    case MomentKind::DoublyRobust:
      g.col(1) = (ctrl * odds * (y - b) + a * (b - psi0)).matrix();
      break;
  }
  Eigen::Index c = 2;
  if (q_w > 0) {
    const Eigen::ArrayXd wt = ctrl * inv_one_minus_pi - 1.0;
    g.middleCols(c, q_w) = (md.r_w.array().colwise() * wt).matrix();
    c += q_w;
  }
  if (q_y > 0) {
    const Eigen::ArrayXd wt = ctrl * (b - y);
    g.middleCols(c, q_y) = (md.r_y.array().colwise() * wt).matrix();
  }
  return g;
}

namespace {

Eigen::VectorXd single_unit(const MomentData& md, Eigen::Index unit, const Eigen::VectorXd& theta,
                            const MomentSpec& spec, MomentKind expected) {
  if (spec.kind != expected) fail(ErrorCode::InvalidArgument, "moment function does not match the moment kind");
  if (unit < 0 || unit >= md.size()) fail(ErrorCode::DimensionMismatch, "unit index out of range");
  return moment_matrix(md.subset({unit}), theta, spec).row(0).transpose();
}

}  // namespace

Eigen::VectorXd moment_ps(const MomentData& md, Eigen::Index unit, const Eigen::VectorXd& theta,
                          const MomentSpec& spec) {
  return single_unit(md, unit, theta, spec, MomentKind::EPS);
}

Eigen::VectorXd moment_or(const MomentData& md, Eigen::Index unit, const Eigen::VectorXd& theta,
                          const MomentSpec& spec) {
  return single_unit(md, unit, theta, spec, MomentKind::Bridge);
}

Eigen::VectorXd moment_dr(const MomentData& md, Eigen::Index unit, const Eigen::VectorXd& theta,
                          const MomentSpec& spec) {
  return single_unit(md, unit, theta, spec, MomentKind::DoublyRobust);
}

Eigen::VectorXd linear_bridge_coefficients(const MomentData& md) {
  std::vector<Eigen::Index> ctrl;
  for (Eigen::Index i = 0; i < md.size(); ++i) {
    if (md.a[i] == 0.0) ctrl.push_back(i);
  }
  const MomentData c = md.subset(ctrl);
  const Eigen::MatrixXd& x = c.s_w;
  const Eigen::MatrixXd& z = c.r_y;
  if (x.cols() == 0) return Eigen::VectorXd();
  if (z.cols() < x.cols()) fail(ErrorCode::RankDeficientDesign, "fewer bridge instruments than coefficients");
  Eigen::MatrixXd zx = z.transpose() * x;
  Eigen::VectorXd zy = z.transpose() * c.y;
  if (z.cols() > x.cols()) {
    // Two-stage least squares.
    const Eigen::MatrixXd zz = z.transpose() * z;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(zz);
    const Eigen::MatrixXd proj = zx.transpose() * ldlt.solve(zx);
    zy = zx.transpose() * ldlt.solve(zy);
    zx = proj;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(zx);
  if (qr.rank() < x.cols()) fail(ErrorCode::RankDeficientDesign, "bridge moment matrix is rank deficient");
  return qr.solve(zy);
}

GmmVariance gmm_variance(const Eigen::VectorXd& theta, const Eigen::MatrixXd& omega, const MomentData& md,
                         const MomentSpec& spec) {
  GmmVariance out;
  out.jacobian = mean_moment_jacobian(md, theta, spec);
  out.sigma = second_moment(moment_matrix(md, theta, spec));
  const Eigen::MatrixXd& G = out.jacobian;
  const PseudoInverse bread = symmetric_pinv(G.transpose() * omega * G);
  out.singular = bread.singular;
  const Eigen::MatrixXd meat = G.transpose() * omega * out.sigma * omega.transpose() * G;
  out.variance = bread.inverse * meat * bread.inverse;
  out.variance = 0.5 * (out.variance + out.variance.transpose());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  v[0] = 1.0;
  v[1] = -1.0;
  const double q = v.dot(out.variance * v);
  out.psi_se = std::sqrt(std::max(0.0, q) / static_cast<double>(md.size()));
  return out;
}

GmmFit fit_gmm(const Dataset& data, const MomentSpec& spec, double lambda, std::uint64_t seed,
               const GmmOptions& options) {
  (void)seed;  // the optimizer is deterministic; kept for a uniform estimator signature
  check_spec(spec);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail(ErrorCode::InvalidArgument, "lambda must be nonnegative");
  const MomentData md = MomentData::build(data, spec);
  const ThetaLayout layout = theta_layout(spec);
  const auto pen = penalized_indices(spec, layout);

  double sum1 = 0.0, sum0 = 0.0, n1 = 0.0, n0 = 0.0;
  for (Eigen::Index i = 0; i < md.size(); ++i) {
    if (md.a[i] == 1.0) {
      sum1 += md.y[i];
      n1 += 1.0;
    } else {
      sum0 += md.y[i];
      n0 += 1.0;
    }
  }
  if (n1 == 0.0 || n0 == 0.0) fail(ErrorCode::DegenerateTreatmentArm, "both treatment arms must be present");

  std::vector<Eigen::VectorXd> starts;
  Eigen::VectorXd s0 = Eigen::VectorXd::Zero(layout.size());
  s0[0] = sum1 / n1;
  s0[1] = sum0 / n0;
  starts.push_back(s0);
  if (spec.uses_bridge()) {
    try {
      const Eigen::VectorXd eta = linear_bridge_coefficients(md);
      Eigen::VectorXd s1 = s0;
      s1.segment(layout.eta_begin, layout.eta_size) = eta;
      const Eigen::VectorXd b = md.s_w * eta;
      double tb = 0.0;
      for (Eigen::Index i = 0; i < md.size(); ++i) tb += md.a[i] * b[i];
      s1[1] = tb / n1;
      starts.push_back(s1);
    } catch (const Error&) {
      // No closed form available; the zero start alone is used.
    }
  }

  const Eigen::Index q = moment_matrix(md.subset({0}), s0, spec).cols();
  GmmFit fit;
  fit.flags = {};
  const PenalizedObjective step1(md, spec, Eigen::MatrixXd::Identity(q, q), lambda, pen);
  MinimizeResult best;
  bool have = false;
  int total_iterations = 0;
  bool nonconv = false;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    MinimizeResult r;
    try {
      r = minimize(step1, starts[s], options);
    } catch (const Error&) {
      if (s == 0 && starts.size() == 1) throw;
      continue;
    }
    total_iterations += r.iterations;
    if (!have || r.value < best.value) {
      best = r;
      have = true;
      fit.flags.chosen_start = static_cast<int>(s);
      nonconv = !r.converged;
    }
  }
  if (!have) fail(ErrorCode::NumericalFailure, "GMM optimization failed from every start");

  Eigen::MatrixXd omega = Eigen::MatrixXd::Identity(q, q);
  MinimizeResult final_result = best;
  if (options.two_step) {
    const PseudoInverse w = symmetric_pinv(second_moment(moment_matrix(md, best.theta, spec)));
    omega = w.inverse;
    fit.flags.singular_weight = w.singular;
    const PenalizedObjective step2(md, spec, omega, lambda, pen);
    final_result = minimize(step2, best.theta, options);
    total_iterations += final_result.iterations;
    nonconv = !final_result.converged;
  }

  fit.theta = final_result.theta;
  fit.objective = final_result.value;
  fit.omega_weight = omega;
  fit.lambda = lambda;
  fit.n = md.size();
  fit.kind = spec.kind;
  fit.layout = layout;
  fit.flags.iterations = total_iterations;
  fit.flags.non_convergence = nonconv;
  if (spec.uses_odds()) fit.alpha_names = spec.basis.s_y.descriptors();
  if (spec.uses_bridge()) fit.eta_names = spec.basis.s_w.descriptors();

  const GmmVariance var = gmm_variance(fit.theta, omega, md, spec);
  fit.variance = var.variance;
  fit.jacobian = var.jacobian;
  fit.sigma = var.sigma;
  fit.psi_se = var.psi_se;
  fit.flags.singular_jacobian_product = var.singular;
  fit.psi_hat = fit.theta[0] - fit.theta[1];
  return fit;
}

std::optional<double> GmmFit::alpha_coefficient(const std::string& name) const {
  for (std::size_t i = 0; i < alpha_names.size(); ++i) {
    if (alpha_names[i] == name) return theta[layout.alpha_begin + static_cast<Eigen::Index>(i)];
  }
  return std::nullopt;
}

std::pair<double, double> GmmFit::ci(double alpha_level) const {
  const double z = two_sided_critical(alpha_level);
  return {psi_hat - z * psi_se, psi_hat + z * psi_se};
}

Eigen::VectorXd gmm_influence(const GmmFit& fit, const Dataset& data, const MomentSpec& spec) {
  const MomentData md = MomentData::build(data, spec);
  const Eigen::MatrixXd g = moment_matrix(md, fit.theta, spec);
  const Eigen::MatrixXd& G = fit.jacobian;
  const Eigen::MatrixXd& omega = fit.omega_weight;
  const PseudoInverse bread = symmetric_pinv(G.transpose() * omega * G);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(fit.theta.size());
  v[0] = 1.0;
  v[1] = -1.0;
  // IF_i = v' (-(G' W G)^{-1} G' W g_i)
  const Eigen::VectorXd row = -(omega.transpose() * G * bread.inverse.transpose() * v);
  return g * row;
}

UnitFunction gmm_odds_function(const GmmFit& fit, const MomentSpec& spec) {
  if (!spec.uses_odds()) fail(ErrorCode::InvalidArgument, "spec has no odds model");
  const Eigen::VectorXd alpha = fit.theta.segment(fit.layout.alpha_begin, fit.layout.alpha_size);
  return [alpha, spec](const Dataset& d) -> Eigen::VectorXd {
    const MomentData md = MomentData::build(d, spec);
    Eigen::VectorXd z = md.s_y * alpha + md.offset;
    return z.cwiseMin(kMaxLogOdds).cwiseMax(-kMaxLogOdds).array().exp().matrix();
  };
}

UnitFunction gmm_bridge_function(const GmmFit& fit, const MomentSpec& spec) {
  if (!spec.uses_bridge()) fail(ErrorCode::InvalidArgument, "spec has no bridge model");
  const Eigen::VectorXd eta = fit.theta.segment(fit.layout.eta_begin, fit.layout.eta_size);
  return [eta, spec](const Dataset& d) -> Eigen::VectorXd {
    return spec.basis.s_w.evaluate(d.w, d.x) * eta;
  };
}

LambdaSelection cv_select_lambda(const Dataset& data, const MomentSpec& spec, std::vector<double> candidates,
                                 std::uint64_t seed, int groups) {
  if (candidates.empty()) fail(ErrorCode::EmptyInput, "no lambda candidates");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  LambdaSelection out;
  out.candidates = candidates;
  out.scores.assign(candidates.size(), std::numeric_limits<double>::infinity());
  if (candidates.size() == 1) {
    out.scores[0] = std::numeric_limits<double>::quiet_NaN();  // not evaluated
    out.lambda = candidates[0];
    return out;
  }

  const Eigen::Index n = data.size();
  const int n_groups = groups <= 0 ? static_cast<int>(n) : std::min<int>(groups, static_cast<int>(n));
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  if (groups > 0) {
    CounterRng rng(seed);
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  }
  std::vector<std::vector<Eigen::Index>> held(static_cast<std::size_t>(n_groups));
  for (std::size_t pos = 0; pos < perm.size(); ++pos) held[pos % static_cast<std::size_t>(n_groups)].push_back(perm[pos]);
  for (auto& h : held) std::sort(h.begin(), h.end());

  const MomentData md_all = MomentData::build(data, spec);
  const std::size_t n_tasks = candidates.size() * static_cast<std::size_t>(n_groups);
  std::vector<Eigen::VectorXd> sums(n_tasks);
  std::vector<char> ok(n_tasks, 0);
  parallel_for(n_tasks, [&](std::size_t t) {
    const std::size_t li = t / static_cast<std::size_t>(n_groups);
    const std::size_t gi = t % static_cast<std::size_t>(n_groups);
    std::vector<char> is_held(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i : held[gi]) is_held[static_cast<std::size_t>(i)] = 1;
    std::vector<Eigen::Index> train;
    train.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!is_held[static_cast<std::size_t>(i)]) train.push_back(i);
    }
    try {
      const GmmFit f = fit_gmm(data.subset(train), spec, candidates[li], seed);
      const Eigen::MatrixXd g = moment_matrix(md_all.subset(held[gi]), f.theta, spec);
      sums[t] = g.colwise().sum().transpose();
      ok[t] = sums[t].allFinite() ? 1 : 0;
    } catch (const Error&) {
      ok[t] = 0;
    }
  });

  for (std::size_t li = 0; li < candidates.size(); ++li) {
    Eigen::VectorXd total;
    bool good = true;
    for (int gi = 0; gi < n_groups; ++gi) {
      const std::size_t t = li * static_cast<std::size_t>(n_groups) + static_cast<std::size_t>(gi);
      if (!ok[t]) {
        good = false;
        break;
      }
      if (total.size() == 0) total = sums[t];
      else total += sums[t];
    }
    if (good) out.scores[li] = (total / static_cast<double>(n)).squaredNorm();
  }
  std::size_t best = 0;
  for (std::size_t li = 1; li < candidates.size(); ++li) {
    if (out.scores[li] < out.scores[best]) best = li;
  }
  if (std::isinf(out.scores[best])) fail(ErrorCode::AllCandidatesFailed, "every lambda candidate failed to fit");
  out.lambda = candidates[best];
  return out;
}

}  // namespace spc
