#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace spc {

/// A basis built from one "argument" block (y, or the proxy columns w) and
/// the covariates x. Each term yields one column.
struct FeatureTerm {
  enum class Kind {
    Intercept,  // 1
    Arg,        // arg_j
    Cov,        // x_k
    ArgCov,     // arg_j * x_k
    ArgPower,   // arg_j ^ p
    ArgMean,    // mean over all argument columns
  };
  Kind kind = Kind::Intercept;
  int j = 0;
  int k = 0;
  int power = 1;
};

class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::string arg_name, std::vector<FeatureTerm> terms)
      : arg_name_(std::move(arg_name)), terms_(std::move(terms)) {}

  /// (n x arg_dim, n x x_dim) -> n x size().
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& arg, const Eigen::MatrixXd& x) const;

  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const std::vector<FeatureTerm>& terms() const { return terms_; }
  const std::string& arg_name() const { return arg_name_; }

  /// Human-readable names such as "1", "y", "x2", "w1*x3", "y^2".
  std::vector<std::string> descriptors() const;
  std::optional<std::size_t> index_of(const std::string& descriptor) const;

  /// Parses a comma-separated descriptor list ("1,y,x1,y*x1") for argument
  /// `arg_name`. "none" or "" gives the empty map.
  static FeatureMap parse(const std::string& arg_name, const std::string& text);

 private:
  std::string arg_name_ = "y";
  std::vector<FeatureTerm> terms_;
};

/// (1, arg, x)
FeatureMap linear_basis(const std::string& arg_name, int arg_dim, int x_dim);
/// (1, arg, x, arg (x) x)
FeatureMap interacted_basis(const std::string& arg_name, int arg_dim, int x_dim);

}  // namespace spc
