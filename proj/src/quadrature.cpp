#include "spc/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

#include "spc/error.hpp"

namespace spc {

GaussHermiteRule gauss_hermite(int order) {
  if (order < 1) fail(ErrorCode::InvalidArgument, "quadrature order must be positive");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  if (es.info() != Eigen::Success) fail(ErrorCode::NumericalFailure, "Jacobi eigensolver failed");
  GaussHermiteRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights = std::sqrt(std::numbers::pi) * es.eigenvectors().row(0).transpose().array().square();
  return rule;
}

double normal_expectation(const std::function<double(double)>& g, double mean, double sd,
                          const GaussHermiteRule& rule) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    s += rule.weights[i] * g(mean + std::numbers::sqrt2 * sd * rule.nodes[i]);
  }
  return s / std::sqrt(std::numbers::pi);
}

}  // namespace spc
