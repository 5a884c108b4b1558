#include "spc/data_model.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "spc/error.hpp"
#include "spc/rng.hpp"

namespace spc {

Eigen::Index Dataset::n_treated() const {
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) count += a[i] == 1.0;
  return count;
}

Dataset Dataset::subset(std::span<const Eigen::Index> rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Dataset out;
  out.y.resize(m);
  out.a.resize(m);
  out.w.resize(m, w.cols());
  out.x.resize(m, x.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index i = rows[r];
    out.y[r] = y[i];
    out.a[r] = a[i];
    out.w.row(r) = w.row(i);
    out.x.row(r) = x.row(i);
  }
  return out;
}

Dataset Dataset::with_proxies(std::span<const Eigen::Index> columns) const {
  Dataset out = *this;
  out.w.resize(size(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] < 0 || columns[c] >= w.cols()) {
      fail(ErrorCode::DimensionMismatch, "proxy column index out of range");
    }
    out.w.col(static_cast<Eigen::Index>(c)) = w.col(columns[c]);
  }
  return out;
}

Eigen::MatrixXd outcome_arguments(const Dataset& data) {
  Eigen::MatrixXd out(data.size(), 1 + data.x.cols());
  out.col(0) = data.y;
  out.rightCols(data.x.cols()) = data.x;
  return out;
}

Eigen::MatrixXd proxy_arguments(const Dataset& data) {
  Eigen::MatrixXd out(data.size(), data.w.cols() + data.x.cols());
  out.leftCols(data.w.cols()) = data.w;
  out.rightCols(data.x.cols()) = data.x;
  return out;
}

const Dataset& validate_dataset(const Dataset& raw) {
  const Eigen::Index n = raw.y.size();
  if (raw.a.size() != n || raw.w.rows() != n || raw.x.rows() != n) {
    fail(ErrorCode::DimensionMismatch, "y, a, w and x must share the same number of rows");
  }
  if (n < 2) fail(ErrorCode::DimensionMismatch, "at least two units are required");
  if (raw.w.cols() < 1) fail(ErrorCode::DimensionMismatch, "at least one proxy column is required");
  if (!raw.y.allFinite()) fail(ErrorCode::NonFiniteValue, "y contains a non-finite value");
  if (!raw.a.allFinite()) fail(ErrorCode::NonFiniteValue, "a contains a non-finite value");
  if (!raw.w.allFinite()) fail(ErrorCode::NonFiniteValue, "w contains a non-finite value");
  if (!raw.x.allFinite()) fail(ErrorCode::NonFiniteValue, "x contains a non-finite value");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (raw.a[i] != 0.0 && raw.a[i] != 1.0) {
      fail(ErrorCode::NonBinaryTreatment, "a[" + std::to_string(i) + "] is not 0 or 1");
    }
  }
  const Eigen::Index treated = raw.n_treated();
  if (treated == 0 || treated == n) {
    fail(ErrorCode::DegenerateTreatmentArm, "both treatment arms must be present");
  }
  return raw;
}

std::vector<Eigen::Index> FoldPartition::fold(int j) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == j) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<Eigen::Index> FoldPartition::complement(int j) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != j) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

FoldPartition split_folds(Eigen::Index n, int k, const Eigen::VectorXd& a, std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::InvalidArgument, "k must be at least 2");
  if (n < 2 * static_cast<Eigen::Index>(k)) {
    fail(ErrorCode::TooFewUnits, "need n >= 2k units to form k folds");
  }
  if (a.size() != n) fail(ErrorCode::DimensionMismatch, "treatment vector length differs from n");

  CounterRng rng(seed);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  FoldPartition out;
  out.k = k;
  out.seed = seed;
  out.assignments.assign(perm.size(), 0);

  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (std::size_t i = perm.size() - 1; i > 0; --i) {
      std::swap(perm[i], perm[rng.below(i + 1)]);
    }
    std::vector<int> treated(static_cast<std::size_t>(k), 0);
    std::vector<int> control(static_cast<std::size_t>(k), 0);
    for (std::size_t pos = 0; pos < perm.size(); ++pos) {
      const int f = static_cast<int>(pos % static_cast<std::size_t>(k));
      out.assignments[static_cast<std::size_t>(perm[pos])] = f + 1;
      (a[perm[pos]] == 1.0 ? treated : control)[static_cast<std::size_t>(f)]++;
    }
    const bool ok = std::all_of(treated.begin(), treated.end(), [](int c) { return c > 0; }) &&
                    std::all_of(control.begin(), control.end(), [](int c) { return c > 0; });
    if (ok) return out;
  }
  fail(ErrorCode::InfeasibleStratification,
       "could not place both treatment arms in every fold after 1000 attempts");
}

}  // namespace spc
