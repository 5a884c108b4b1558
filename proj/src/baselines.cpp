#include "spc/baselines.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "spc/error.hpp"
#include "spc/stats.hpp"

namespace spc {

PrePeriodSelector PrePeriodSelector::parse(const std::string& text) {
  if (text == "latest") return latest();
  if (text == "average") return average();
  long j = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), j);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || j < 1) {
    fail(ErrorCode::InvalidArgument, "pre-period selector must be latest, average or a column number: " + text);
  }
  return column(j - 1);
}

Eigen::VectorXd select_pre_period(const Dataset& data, const PrePeriodSelector& selector) {
  const Eigen::Index dw = data.w.cols();
  if (dw < 1) fail(ErrorCode::DimensionMismatch, "no proxy columns");
  switch (selector.kind) {
    case PrePeriodSelector::Kind::Latest: return data.w.col(dw - 1);
    case PrePeriodSelector::Kind::Average: return data.w.rowwise().mean();
    case PrePeriodSelector::Kind::Index:
      if (selector.index < 0 || selector.index >= dw) fail(ErrorCode::InvalidArgument, "pre-period column out of range");
      return data.w.col(selector.index);
  }
  return data.w.col(dw - 1);
}

DidResult did_estimate(const Dataset& data, const PrePeriodSelector& selector, double alpha_level) {
  validate_dataset(data);
  const Eigen::ArrayXd d = (data.y - select_pre_period(data, selector)).array();
  const Eigen::ArrayXd a = data.a.array();
  const double n1 = a.sum();
  const double n0 = static_cast<double>(data.size()) - n1;
  const double mu1 = (a * d).sum() / n1;
  const double mu0 = ((1.0 - a) * d).sum() / n0;
  const double p = n1 / static_cast<double>(data.size());

  DidResult r;
  r.psi_hat = mu1 - mu0;
  r.influence_values = (a * (d - mu1) / p - (1.0 - a) * (d - mu0) / (1.0 - p)).matrix();
  // Equals var_1 / n_1 + var_0 / n_0 with divisor n per arm.
  r.se = std::sqrt(r.influence_values.squaredNorm() / static_cast<double>(data.size()) /
                   static_cast<double>(data.size()));
  const double half = two_sided_critical(alpha_level) * r.se;
  r.ci = {r.psi_hat - half, r.psi_hat + half};
  return r;
}

OlsFit ols(const Eigen::MatrixXd& z, const Eigen::VectorXd& target) {
  if (z.rows() != target.size()) fail(ErrorCode::DimensionMismatch, "design and response differ in length");
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();
  if (n <= p) fail(ErrorCode::TooFewUnits, "OLS needs more units than regressors");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  if (qr.rank() < p) fail(ErrorCode::RankDeficientDesign, "regressor matrix is rank deficient");
  OlsFit f;
  f.beta = qr.solve(target);
  const Eigen::VectorXd resid = target - z * f.beta;
  f.sigma2 = resid.squaredNorm() / static_cast<double>(n - p);
  const Eigen::MatrixXd zz = z.transpose() * z;
  f.vhat = f.sigma2 * zz.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  return f;
}

namespace {

Eigen::MatrixXd coca_design(const Dataset& data, const Eigen::VectorXd& third) {
  const Eigen::Index n = data.size();
  Eigen::MatrixXd z(n, 3 + data.x.cols());
  z.col(0).setOnes();
  z.col(1) = data.a;
  z.col(2) = third;
  if (data.x.cols() > 0) z.rightCols(data.x.cols()) = data.x;
  return z;
}

Eigen::VectorXd single_proxy(const Dataset& data) {
  if (data.w.cols() != 1) fail(ErrorCode::DimensionMismatch, "the legacy estimator takes exactly one proxy column");
  return data.w.col(0);
}

}  // namespace

double coca_delta_se(const Eigen::VectorXd& beta, const Eigen::MatrixXd& vhat) {
  const double b3 = beta[2];
  const double psi = -beta[1] / b3;
  // Gradient of -b2/b3 is (-1/b3, -psi/b3).
  const double q = vhat(1, 1) + 2.0 * psi * vhat(1, 2) + psi * psi * vhat(2, 2);
  return std::sqrt(std::max(q, 0.0)) / std::abs(b3);
}

std::pair<double, double> CocaOlsFit::ci(double alpha_level) const {
  const double half = two_sided_critical(alpha_level) * se;
  return {psi_hat - half, psi_hat + half};
}

CocaOlsFit coca_ols_oneshot(const Dataset& data) {
  validate_dataset(data);
  const Eigen::VectorXd w = single_proxy(data);
  const OlsFit f = ols(coca_design(data, data.y), w);
  CocaOlsFit r;
  r.beta = f.beta;
  r.vhat = f.vhat;
  r.sigma2 = f.sigma2;
  r.unstable = std::abs(f.beta[2]) < kNearZeroBeta3;
  if (r.unstable) {
    r.psi_hat = std::numeric_limits<double>::quiet_NaN();
    r.se = std::numeric_limits<double>::quiet_NaN();
  } else {
    r.psi_hat = -f.beta[1] / f.beta[2];
    r.se = coca_delta_se(f.beta, f.vhat);
  }
  return r;
}

CocaGridResult coca_grid_search(const Dataset& data, const std::vector<double>& psi_grid, double alpha_level) {
  if (psi_grid.empty()) fail(ErrorCode::EmptyInput, "psi grid is empty");
  validate_dataset(data);
  const Eigen::VectorXd w = single_proxy(data);
  const double z = two_sided_critical(alpha_level);
  CocaGridResult r;
  r.grid = psi_grid;
  for (const double psi : psi_grid) {
    const OlsFit f = ols(coca_design(data, data.y - psi * data.a), w);
    const double t = std::abs(f.beta[1]) / std::sqrt(f.vhat(1, 1));
    r.wald.push_back(t);
    if (t < z) r.accepted.push_back(psi);
  }
  return r;
}

}  // namespace spc
