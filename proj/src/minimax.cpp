#include "spc/minimax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spc/error.hpp"
#include "spc/linalg.hpp"
#include "spc/parallel.hpp"

namespace spc {

namespace {

void check_problem(const MinimaxProblem& p) {
  const Eigen::Index m = p.s.size();
  if (m < 1) fail(ErrorCode::TooFewUnits, "minimax problem has no units");
  if (p.d.size() != m || p.v_f.rows() != m || p.v_g.rows() != m) {
    fail(ErrorCode::DimensionMismatch, "minimax inputs differ in length");
  }
  for (double v : {p.lambda_f, p.lambda_g, p.kappa_f, p.kappa_g}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      fail(ErrorCode::InvalidArgument, "minimax regularization and bandwidths must be positive");
    }
  }
}

// 0.25 G (G/M + lambda_g I)^{-1} X for a block of columns X.
class GammaOperator {
 public:
  GammaOperator(const Eigen::MatrixXd& g, double lambda_g) : g_(g) {
    const auto m = static_cast<double>(g.rows());
    Eigen::MatrixXd h = g / m;
    h.diagonal().array() += lambda_g;
    llt_.compute(h);
    if (llt_.info() != Eigen::Success) fail(ErrorCode::NumericalFailure, "adversary system is not positive definite");
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const { return 0.25 * (g_ * llt_.solve(x)); }

 private:
  const Eigen::MatrixXd& g_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace

Eigen::VectorXd KernelFunctionEstimate::evaluate(const Eigen::MatrixXd& rows) const {
  const Eigen::MatrixXd q = standardizer.apply(rows);
  const Eigen::MatrixXd z = standardizer.apply(anchors);
  return cross_gram(q, z, kernel) * gamma;
}

LowRankFactor pivoted_cholesky(const Eigen::MatrixXd& rows, const GaussianKernelParams& kernel, double tol) {
  const Eigen::Index m = rows.rows();
  LowRankFactor out;
  Eigen::VectorXd resid = Eigen::VectorXd::Ones(m);  // unit kernel diagonal
  Eigen::MatrixXd l(m, std::min<Eigen::Index>(m, 64));
  Eigen::Index r = 0;
  while (r < m) {
    Eigen::Index piv = 0;
    const double top = resid.maxCoeff(&piv);
    if (!(top > tol)) break;
    if (r == l.cols()) l.conservativeResize(Eigen::NoChange, std::min<Eigen::Index>(m, 2 * l.cols()));
    Eigen::VectorXd col = cross_gram(rows, rows.row(piv), kernel);
    if (r > 0) col.noalias() -= l.leftCols(r) * l.row(piv).head(r).transpose();
    col /= std::sqrt(top);
    for (const Eigen::Index p : out.pivots) col[p] = 0.0;  // exact zero in exact arithmetic
    l.col(r) = col;
    resid -= col.cwiseAbs2();
    resid[piv] = 0.0;
    out.pivots.push_back(piv);
    ++r;
  }
  out.l = l.leftCols(r);
  return out;
}

KernelFunctionEstimate solve_minimax(const MinimaxProblem& p) {
  check_problem(p);
  const Eigen::Index m = p.s.size();
  const auto md = static_cast<double>(m);
  const LowRankFactor rf = pivoted_cholesky(p.v_f, {p.kappa_f}, kLowRankTol);
  const LowRankFactor rg = pivoted_cholesky(p.v_g, {p.kappa_g}, kLowRankTol);
  const Eigen::Index q = rf.rank();

  // With F ~ R R', G ~ L L' and f = R c at the units, Gamma = 0.25 L C L',
  // C = (L'L / M + lambda_g I)^{-1}, so the normal equations live in R^q.
  Eigen::MatrixXd h = rg.l.transpose() * rg.l / md;
  h.diagonal().array() += p.lambda_g;
  const Eigen::LLT<Eigen::MatrixXd> hllt(h);
  if (hllt.info() != Eigen::Success) fail(ErrorCode::NumericalFailure, "adversary system is not positive definite");

  const Eigen::MatrixXd a = (p.d.asDiagonal() * rf.l).transpose() * rg.l;  // q x r_g
  const Eigen::MatrixXd ca = hllt.solve(a.transpose());                     // C A'
  Eigen::MatrixXd lhs = 0.25 * (a * ca);
  lhs = 0.5 * (lhs + lhs.transpose());
  lhs.diagonal().array() += md * md * p.lambda_f;
  const Eigen::VectorXd rhs = 0.25 * (ca.transpose() * (rg.l.transpose() * p.s));
  const Eigen::VectorXd c = regularized_pinv_solve(lhs, rhs, MatrixHint::PositiveSemidefinite);

  // R = F[:, P] L_PP^{-T}, so f = F[:, P] beta with L_PP' beta = c.
  Eigen::MatrixXd lpp(q, q);
  for (Eigen::Index i = 0; i < q; ++i) lpp.row(i) = rf.l.row(rf.pivots[static_cast<std::size_t>(i)]);
  KernelFunctionEstimate est;
  est.gamma = lpp.triangularView<Eigen::Lower>().transpose().solve(c);
  if (!est.gamma.allFinite()) fail(ErrorCode::NumericalFailure, "minimax coefficients are not finite");
  est.support = rf.pivots;
  est.anchors.resize(q, p.v_f.cols());
  for (Eigen::Index i = 0; i < q; ++i) est.anchors.row(i) = p.v_f.row(rf.pivots[static_cast<std::size_t>(i)]);
  est.kernel = {p.kappa_f};
  est.standardizer = Standardizer::identity(p.v_f.cols());
  est.adversary_kernel = {p.kappa_g};
  est.adversary_standardizer = Standardizer::identity(p.v_g.cols());
  est.lambda_f = p.lambda_f;
  est.lambda_g = p.lambda_g;
  return est;
}

double minimax_profile_objective(const MinimaxProblem& p, const KernelFunctionEstimate& est) {
  check_problem(p);
  const auto md = static_cast<double>(p.s.size());
  const Eigen::MatrixXd g = gram_matrix(p.v_g, {p.kappa_g});
  const GammaOperator gamma_op(g, p.lambda_g);
  const Eigen::VectorXd fv = est.evaluate(p.v_f);
  const Eigen::MatrixXd z = est.standardizer.apply(est.anchors);
  const double norm2 = est.gamma.dot(gram_matrix(z, est.kernel) * est.gamma);
  const Eigen::VectorXd e = p.s - p.d.cwiseProduct(fv);
  const double adversarial = e.dot(gamma_op.apply(e).col(0)) / (md * md);
  return adversarial + p.lambda_f * norm2;
}

MinimaxRoles odds_roles() {
  MinimaxRoles r;
  r.name = "odds";
  r.s = [](const Dataset& d) -> Eigen::VectorXd { return d.a; };
  r.d = [](const Dataset& d) -> Eigen::VectorXd { return 1.0 - d.a.array(); };
  r.v_f = outcome_arguments;
  r.v_g = proxy_arguments;
  return r;
}

MinimaxRoles bridge_roles() {
  MinimaxRoles r;
  r.name = "bridge";
  r.s = [](const Dataset& d) -> Eigen::VectorXd { return (1.0 - d.a.array()) * d.y.array(); };
  r.d = [](const Dataset& d) -> Eigen::VectorXd { return 1.0 - d.a.array(); };
  r.v_f = proxy_arguments;
  r.v_g = outcome_arguments;
  return r;
}

MinimaxRoles ratio_roles(UnitFunction pilot) {
  MinimaxRoles r = odds_roles();
  r.name = "ratio";
  r.d = [pilot = std::move(pilot)](const Dataset& d) -> Eigen::VectorXd {
    return (1.0 - d.a.array()) * pilot(d).array();
  };
  return r;
}

BandwidthScale median_bandwidths(const Dataset& fold, const MinimaxRoles& roles, std::uint64_t seed) {
  auto scale_of = [&](const Eigen::MatrixXd& raw) {
    const Eigen::MatrixXd z = Standardizer::fit(raw).apply(raw);
    if (z.cols() == 0) return 1.0;
    return median_heuristic_bandwidth(z, seed);
  };
  return {scale_of(roles.v_f(fold)), scale_of(roles.v_g(fold))};
}

MinimaxHyper resolve(const RelativeHyper& rel, const BandwidthScale& scale) {
  return {rel.lambda_f, rel.lambda_g, rel.kappa_f_mult * scale.f, rel.kappa_g_mult * scale.g};
}

KernelFunctionEstimate fit_minimax(const Dataset& fold, const MinimaxRoles& roles, const MinimaxHyper& hyper) {
  const Eigen::MatrixXd vf = roles.v_f(fold);
  const Eigen::MatrixXd vg = roles.v_g(fold);
  const Standardizer sf = Standardizer::fit(vf);
  const Standardizer sg = Standardizer::fit(vg);

  MinimaxProblem p;
  p.s = roles.s(fold);
  p.d = roles.d(fold);
  p.v_f = sf.apply(vf);
  p.v_g = sg.apply(vg);
  p.lambda_f = hyper.lambda_f;
  p.lambda_g = hyper.lambda_g;
  p.kappa_f = hyper.kappa_f;
  p.kappa_g = hyper.kappa_g;

  KernelFunctionEstimate est = solve_minimax(p);
  for (std::size_t i = 0; i < est.support.size(); ++i) {
    est.anchors.row(static_cast<Eigen::Index>(i)) = vf.row(est.support[i]);
  }
  est.standardizer = sf;
  est.adversary_standardizer = sg;
  return est;
}

KernelFunctionEstimate fit_odds_weight(const Dataset& fold, const MinimaxHyper& hyper) {
  return fit_minimax(fold, odds_roles(), hyper);
}

KernelFunctionEstimate fit_bridge(const Dataset& fold, const MinimaxHyper& hyper) {
  return fit_minimax(fold, bridge_roles(), hyper);
}

Eigen::VectorXd clip_odds(Eigen::VectorXd values) {
  return values.cwiseMax(kOddsClipLow).cwiseMin(kOddsClipHigh);
}

Eigen::VectorXd minimax_residuals(const KernelFunctionEstimate& est, const Dataset& validation,
                                  const MinimaxRoles& roles) {
  const Eigen::VectorXd fv = est.evaluate(roles.v_f(validation));
  return roles.s(validation) - roles.d(validation).cwiseProduct(fv);
}

double projected_risk(const KernelFunctionEstimate& est, const Dataset& validation,
                      const MinimaxRoles& roles, double lambda_g, double kappa_g) {
  if (validation.size() < 1) fail(ErrorCode::EmptyInput, "validation set is empty");
  const Eigen::VectorXd e = minimax_residuals(est, validation, roles);
  const Eigen::MatrixXd g = gram_matrix(est.adversary_standardizer.apply(roles.v_g(validation)), {kappa_g});
  const GammaOperator gamma_op(g, lambda_g);
  return e.dot(gamma_op.apply(e).col(0));
}

double v_statistic_risk(const KernelFunctionEstimate& est, const Dataset& validation,
                        const MinimaxRoles& roles, double kappa_g) {
  if (validation.size() < 1) fail(ErrorCode::EmptyInput, "validation set is empty");
  const Eigen::VectorXd e = minimax_residuals(est, validation, roles);
  const Eigen::MatrixXd g = gram_matrix(est.adversary_standardizer.apply(roles.v_g(validation)), {kappa_g});
  return e.dot(g * e);
}

HyperSelection cv_select_hyperparams(const Dataset& fold, const MinimaxRoles& roles,
                                     const std::vector<MinimaxHyper>& candidates, int inner_folds,
                                     RiskKind risk, std::uint64_t seed) {
  if (candidates.empty()) fail(ErrorCode::EmptyInput, "no hyperparameter candidates");
  if (inner_folds < 2) fail(ErrorCode::InvalidArgument, "inner cross-validation needs at least 2 folds");
  HyperSelection out;
  out.risks.assign(candidates.size(), std::numeric_limits<double>::infinity());
  if (candidates.size() == 1) {
    out.risks[0] = std::numeric_limits<double>::quiet_NaN();  // not evaluated
    out.index = 0;
    out.best = candidates[0];
    return out;
  }

  const FoldPartition inner = split_folds(fold.size(), inner_folds, fold.a, seed);
  std::vector<Dataset> train(static_cast<std::size_t>(inner_folds));
  std::vector<Dataset> valid(static_cast<std::size_t>(inner_folds));
  for (int c = 1; c <= inner_folds; ++c) {
    const auto tr = inner.complement(c);
    const auto va = inner.fold(c);
    train[static_cast<std::size_t>(c - 1)] = fold.subset(tr);
    valid[static_cast<std::size_t>(c - 1)] = fold.subset(va);
  }

  const std::size_t n_tasks = candidates.size() * static_cast<std::size_t>(inner_folds);
  std::vector<double> task_risk(n_tasks, std::numeric_limits<double>::infinity());
  parallel_for(n_tasks, [&](std::size_t t) {
    const std::size_t ci = t / static_cast<std::size_t>(inner_folds);
    const std::size_t c = t % static_cast<std::size_t>(inner_folds);
    const MinimaxHyper& h = candidates[ci];
    try {
      const KernelFunctionEstimate est = fit_minimax(train[c], roles, h);
      const double r = risk == RiskKind::Projected ? projected_risk(est, valid[c], roles, h.lambda_g, h.kappa_g)
                                                   : v_statistic_risk(est, valid[c], roles, h.kappa_g);
      task_risk[t] = std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      task_risk[t] = std::numeric_limits<double>::infinity();
    }
  });

  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    double total = 0.0;
    for (int c = 0; c < inner_folds; ++c) total += task_risk[ci * static_cast<std::size_t>(inner_folds) + c];
    out.risks[ci] = total / inner_folds;
  }
  out.index = 0;
  for (std::size_t ci = 1; ci < candidates.size(); ++ci) {
    if (out.risks[ci] < out.risks[out.index]) out.index = ci;
  }
  out.best = candidates[out.index];
  return out;
}

HyperSelection select_hyperparams(const Dataset& fold, const MinimaxRoles& roles, const HyperGrid& grid,
                                  int inner_folds, RiskKind risk, std::uint64_t seed) {
  if (grid.lambdas.empty() || grid.kappa_multipliers.empty()) fail(ErrorCode::EmptyInput, "empty hyperparameter grid");
  const BandwidthScale scale = median_bandwidths(fold, roles, seed);

  std::vector<MinimaxHyper> tied;
  for (double lam : grid.lambdas) {
    for (double mult : grid.kappa_multipliers) {
      tied.push_back(resolve({lam, lam, mult, mult}, scale));
    }
  }
  const HyperSelection first = cv_select_hyperparams(fold, roles, tied, inner_folds, risk, seed);
  if (std::isinf(first.risks[first.index])) {
    fail(ErrorCode::AllCandidatesFailed, "every hyperparameter candidate failed to fit");
  }

  std::vector<MinimaxHyper> refined;
  for (double lf : grid.lambdas) {
    for (double lg : grid.lambdas) {
      refined.push_back({lf, lg, first.best.kappa_f, first.best.kappa_g});
    }
  }
  // The stage-one winner is part of this grid and scored on the same inner split.
  return cv_select_hyperparams(fold, roles, refined, inner_folds, risk, seed);
}

Eigen::VectorXd OddsEstimate::evaluate_raw(const Dataset& data) const {
  Eigen::VectorXd r = kernel.evaluate(outcome_arguments(data));
  if (remedy_applied) r = r.cwiseProduct(pilot(data));
  return r;
}

OddsEstimate fit_odds_with_ratio_remedy(const Dataset& fold, const UnitFunction& pilot,
                                        const MinimaxHyper& hyper) {
  const Eigen::VectorXd tilde = pilot(fold);
  if (tilde.size() != fold.size()) fail(ErrorCode::DimensionMismatch, "pilot odds length differs from fold size");
  if (!(tilde.minCoeff() > 0.0) || !tilde.allFinite()) {
    fail(ErrorCode::NonPositivePilot, "pilot odds must be positive and finite on the fold");
  }
  OddsEstimate out;
  if (tilde.maxCoeff() > kRemedyTrigger * tilde.minCoeff()) {
    out.kernel = fit_minimax(fold, ratio_roles(pilot), hyper);
    out.pilot = pilot;
    out.remedy_applied = true;
  } else {
    out.kernel = fit_odds_weight(fold, hyper);
  }
  return out;
}

}  // namespace spc
