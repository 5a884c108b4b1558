#pragma once

#include <Eigen/Dense>

#include <functional>

namespace spc {

/// Nodes and weights for the weight function exp(-x^2).
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Golub-Welsch construction.
GaussHermiteRule gauss_hermite(int order);

/// E g(Z) for Z ~ Normal(mean, sd^2).
double normal_expectation(const std::function<double(double)>& g, double mean, double sd,
                          const GaussHermiteRule& rule);

}  // namespace spc
