#include "spc/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "spc/error.hpp"
#include "spc/rng.hpp"
#include "spc/stats.hpp"

namespace spc {

namespace {

void check_bandwidth(const GaussianKernelParams& params) {
  if (!(params.bandwidth > 0.0) || !std::isfinite(params.bandwidth)) {
    fail(ErrorCode::InvalidArgument, "kernel bandwidth must be a positive finite number");
  }
}

double squared_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b,
                        Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double diff = a(i, c) - b(j, c);
    s += diff * diff;
  }
  return s;
}

}  // namespace

double kernel_eval(const Eigen::VectorXd& v, const Eigen::VectorXd& v_prime,
                   const GaussianKernelParams& params) {
  if (v.size() != v_prime.size()) fail(ErrorCode::DimensionMismatch, "kernel arguments differ in length");
  check_bandwidth(params);
  return std::exp(-(v - v_prime).squaredNorm() / params.bandwidth);
}

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& rows, const GaussianKernelParams& params) {
  check_bandwidth(params);
  const Eigen::Index m = rows.rows();
  Eigen::MatrixXd out(m, m);
  const double inv = 1.0 / params.bandwidth;
  for (Eigen::Index j = 0; j < m; ++j) {
    out(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < m; ++i) {
      const double k = std::exp(-squared_distance(rows, i, rows, j) * inv);
      out(i, j) = k;
      out(j, i) = k;
    }
  }
  return out;
}

Eigen::MatrixXd cross_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const GaussianKernelParams& params) {
  check_bandwidth(params);
  if (a.cols() != b.cols()) fail(ErrorCode::DimensionMismatch, "kernel arguments differ in dimension");
  Eigen::MatrixXd out(a.rows(), b.rows());
  const double inv = 1.0 / params.bandwidth;
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out(i, j) = std::exp(-squared_distance(a, i, b, j) * inv);
    }
  }
  return out;
}

double median_heuristic_bandwidth(const Eigen::MatrixXd& rows, std::uint64_t seed) {
  const Eigen::Index m = rows.rows();
  constexpr std::uint64_t kMaxPairs = 1000;
  std::vector<double> d2;
  const auto total = static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(m > 0 ? m - 1 : 0) / 2;
  if (total <= kMaxPairs) {
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = i + 1; j < m; ++j) d2.push_back(squared_distance(rows, i, rows, j));
    }
  } else {
    CounterRng rng(seed);
    d2.reserve(kMaxPairs);
    while (d2.size() < kMaxPairs) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m)));
      const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m)));
      if (i != j) d2.push_back(squared_distance(rows, i, rows, j));
    }
  }
  if (d2.empty()) fail(ErrorCode::DegenerateData, "median heuristic needs at least two rows");
  const double med = median(d2);
  if (med > 0.0) return med;
  // Heavily tied data: fall back to the median of the nonzero distances.
  std::vector<double> positive;
  for (double v : d2) {
    if (v > 0.0) positive.push_back(v);
  }
  if (positive.empty() && total > kMaxPairs) {
    for (Eigen::Index i = 1; i < m && positive.empty(); ++i) {
      const double v = squared_distance(rows, 0, rows, i);
      if (v > 0.0) positive.push_back(v);
    }
  }
  if (positive.empty()) fail(ErrorCode::DegenerateData, "all rows are identical");
  return median(positive);
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
  Standardizer s;
  s.input_dim = rows.cols();
  const Eigen::Index n = rows.rows();
  std::vector<double> means;
  std::vector<double> scales;
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const double mu = rows.col(c).mean();
    const double var = n > 1 ? (rows.col(c).array() - mu).square().sum() / static_cast<double>(n - 1) : 0.0;
    const double sd = std::sqrt(var);
    if (sd > 0.0 && std::isfinite(sd)) {
      s.kept.push_back(c);
      means.push_back(mu);
      scales.push_back(sd);
    }
  }
  s.mean = Eigen::Map<Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
  s.scale = Eigen::Map<Eigen::VectorXd>(scales.data(), static_cast<Eigen::Index>(scales.size()));
  return s;
}

Standardizer Standardizer::identity(Eigen::Index dim) {
  Standardizer s;
  s.input_dim = dim;
  s.mean = Eigen::VectorXd::Zero(dim);
  s.scale = Eigen::VectorXd::Ones(dim);
  for (Eigen::Index c = 0; c < dim; ++c) s.kept.push_back(c);
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != input_dim) fail(ErrorCode::DimensionMismatch, "standardizer input dimension mismatch");
  Eigen::MatrixXd out(rows.rows(), output_dim());
  for (Eigen::Index k = 0; k < output_dim(); ++k) {
    out.col(k) = (rows.col(kept[static_cast<std::size_t>(k)]).array() - mean[k]) / scale[k];
  }
  return out;
}

}  // namespace spc
