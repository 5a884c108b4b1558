#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "spc/data_model.hpp"
#include "spc/error.hpp"
#include "spc/rng.hpp"

namespace spc::test {

inline Eigen::MatrixXd random_matrix(CounterRng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline Eigen::VectorXd random_vector(CounterRng& rng, Eigen::Index n) { return random_matrix(rng, n, 1).col(0); }

/// Small random dataset with both arms present.
inline Dataset random_dataset(CounterRng& rng, Eigen::Index n, Eigen::Index dw = 1, Eigen::Index dx = 0) {
  Dataset d;
  d.y = random_vector(rng, n);
  d.a.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) d.a[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  d.a[0] = 0.0;
  d.a[1] = 1.0;
  d.w = random_matrix(rng, n, dw);
  d.x = random_matrix(rng, n, dx);
  return d;
}

template <class F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected spc::Error");
}

}  // namespace spc::test
