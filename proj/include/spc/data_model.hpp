#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace spc {

/// Observed units O = (Y, A, W, X). W has at least one column; X may have zero.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXd a;
  Eigen::MatrixXd w;
  Eigen::MatrixXd x;

  Eigen::Index size() const { return y.size(); }
  Eigen::Index proxy_dim() const { return w.cols(); }
  Eigen::Index covariate_dim() const { return x.cols(); }

  Eigen::Index n_treated() const;
  double treated_fraction() const { return static_cast<double>(n_treated()) / size(); }

  /// Rows in the given order.
  Dataset subset(std::span<const Eigen::Index> rows) const;

  /// Same units with only the listed proxy columns.
  Dataset with_proxies(std::span<const Eigen::Index> columns) const;
};

/// A function of each unit's observed data, evaluated row by row.
using UnitFunction = std::function<Eigen::VectorXd(const Dataset&)>;

/// Columns (Y, X).
Eigen::MatrixXd outcome_arguments(const Dataset& data);

/// Columns (W, X).
Eigen::MatrixXd proxy_arguments(const Dataset& data);

/// Throws spc::Error (DimensionMismatch, NonBinaryTreatment, NonFiniteValue,
/// DegenerateTreatmentArm) and returns the input otherwise.
const Dataset& validate_dataset(const Dataset& raw);

struct FoldPartition {
  std::vector<int> assignments;  // 1..k per unit
  int k = 0;
  std::uint64_t seed = 0;

  std::vector<Eigen::Index> fold(int j) const;       // I_j
  std::vector<Eigen::Index> complement(int j) const; // I_j^c
};

/// Random split into k folds whose sizes differ by at most one, with both
/// treatment arms present in every fold. Retries with fresh permutations up
/// to 1000 times.
FoldPartition split_folds(Eigen::Index n, int k, const Eigen::VectorXd& a, std::uint64_t seed);

}  // namespace spc
