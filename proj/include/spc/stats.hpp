#pragma once

#include <Eigen/Dense>

#include <vector>

namespace spc {

/// Sample median; even counts use the midpoint of the two central values.
double median(std::vector<double> values);

/// Linear-interpolation quantile (R type 7), q in [0, 1].
double quantile(std::vector<double> values, double q);

double normal_cdf(double z);
double normal_quantile(double p);

/// z_{1 - alpha/2}.
double two_sided_critical(double alpha);

/// Mean of squared deviations (divisor n).
double population_variance(const Eigen::VectorXd& v);

/// Unbiased sample variance (divisor n - 1).
double sample_variance(const Eigen::VectorXd& v);

}  // namespace spc
