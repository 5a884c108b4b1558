#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "spc/kernels.hpp"
#include "spc/linalg.hpp"
#include "spc/minimax.hpp"

using namespace spc;
using spc::test::error_code_of;
using spc::test::random_matrix;

TEST_CASE("kernel_eval examples") {
  const GaussianKernelParams k1{1.0};
  const Eigen::Vector2d v(0.3, -1.2);
  CHECK(kernel_eval(v, v, k1) == 1.0);
  CHECK(kernel_eval(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0), k1) == doctest::Approx(0.3678794).epsilon(1e-7));
  const Eigen::Vector2d u(2.0, 0.5);
  CHECK(kernel_eval(u, v, {0.7}) == kernel_eval(v, u, {0.7}));
  CHECK(error_code_of([&] { kernel_eval(Eigen::Vector2d(0, 0), Eigen::Vector3d(0, 0, 0), k1); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(error_code_of([&] { kernel_eval(v, v, {0.0}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("kernel_eval strictly decreases in distance") {
  const GaussianKernelParams k{2.5};
  double prev = 2.0;
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd v(1);
    v << 0.1 * i;
    const double val = kernel_eval(Eigen::VectorXd::Zero(1), v, k);
    CHECK(val < prev);
    CHECK(val > 0.0);
    prev = val;
  }
}

TEST_CASE("gram_matrix examples") {
  const GaussianKernelParams k{1.0};
  CHECK(gram_matrix(Eigen::MatrixXd::Constant(1, 3, 0.4), k)(0, 0) == 1.0);
  Eigen::MatrixXd two(2, 2);
  two << 0.1, 0.2, 0.1, 0.2;
  CHECK(gram_matrix(two, k).isApprox(Eigen::MatrixXd::Ones(2, 2)));
  Eigen::MatrixXd far(2, 1);
  far << 0.0, 1e6;
  const Eigen::MatrixXd g = gram_matrix(far, k);
  CHECK(g(0, 1) == 0.0);
  CHECK(g(1, 0) == 0.0);
}

TEST_CASE("gram matrices are symmetric unit-diagonal PSD") {
  CounterRng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(60));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(3));
    Eigen::MatrixXd rows = random_matrix(rng, m, d);
    if (m > 3) rows.row(m - 1) = rows.row(0);  // duplicated point
    const GaussianKernelParams k{0.1 + 3.0 * rng.uniform()};
    const Eigen::MatrixXd g = gram_matrix(rows, k);
    CHECK(g.isApprox(g.transpose(), 0.0));
    CHECK((g.diagonal().array() == 1.0).all());
    CHECK(symmetric_eigenvalues(g).minCoeff() >= -1e-10);
    CHECK(cross_gram(rows, rows, k).isApprox(g, 1e-14));
  }
}

TEST_CASE("median heuristic examples") {
  Eigen::MatrixXd two(2, 1);
  two << 0, 1;
  CHECK(median_heuristic_bandwidth(two) == 1.0);
  Eigen::MatrixXd three(3, 1);
  three << 0, 1, 2;
  // pairs: (0,1)=1, (0,2)=4, (1,2)=1
  CHECK(median_heuristic_bandwidth(three) == 1.0);
  CHECK(error_code_of([] { median_heuristic_bandwidth(Eigen::MatrixXd::Ones(5, 2)); }) == ErrorCode::DegenerateData);
  CHECK(error_code_of([] { median_heuristic_bandwidth(Eigen::MatrixXd::Ones(1, 2)); }) == ErrorCode::DegenerateData);
}

TEST_CASE("median heuristic subsampling is seeded") {
  CounterRng rng(8);
  const Eigen::MatrixXd rows = random_matrix(rng, 300, 2);
  const double a = median_heuristic_bandwidth(rows, 17);
  CHECK(a == median_heuristic_bandwidth(rows, 17));
  CHECK(a > 0.0);
  // E||z - z'||^2 = 4 for 2-d standard normals; the median is 4 ln 2.
  CHECK(a == doctest::Approx(4.0 * std::log(2.0)).epsilon(0.15));
}

TEST_CASE("regularized_pinv_solve examples") {
  const Eigen::Vector3d b(1, -2, 3);
  CHECK(regularized_pinv_solve(Eigen::Matrix3d::Identity(), b).isApprox(Eigen::MatrixXd(b)));
  Eigen::Matrix2d m;
  m << 2, 0, 0, 0;
  const Eigen::MatrixXd x = regularized_pinv_solve(m, Eigen::Vector2d(4, 5));
  CHECK(x(0, 0) == doctest::Approx(2.0));
  CHECK(x(1, 0) == 0.0);
  Eigen::Matrix2d asym;
  asym << 1, 0.5, 0, 1;
  CHECK(error_code_of([&] { regularized_pinv_solve(asym, Eigen::Vector2d(1, 1)); }) == ErrorCode::NonSymmetric);
}

TEST_CASE("pinv solve projects onto the range of rank-deficient PSD matrices") {
  CounterRng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(100));
    const Eigen::Index r = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    const Eigen::MatrixXd f = random_matrix(rng, n, r);
    const Eigen::MatrixXd m = f * f.transpose();
    const Eigen::VectorXd b = spc::test::random_vector(rng, n);

    // oracle: projector onto range(m) from a full QR of the factor
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(f);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
    const Eigen::VectorXd projected = q * (q.transpose() * b);

    for (auto hint : {MatrixHint::General, MatrixHint::PositiveSemidefinite}) {
      const Eigen::VectorXd sol = regularized_pinv_solve(m, b, hint).col(0);
      CHECK((m * sol - projected).norm() <= 1e-7 * std::max(1.0, projected.norm()));
      // m (m^+ m z) = m z
      const Eigen::VectorXd z = spc::test::random_vector(rng, n);
      const Eigen::VectorXd mz = m * z;
      const Eigen::VectorXd back = regularized_pinv_solve(m, mz, hint).col(0);
      CHECK((m * back - mz).norm() <= 1e-8 * mz.norm());
    }
  }
}

TEST_CASE("standardizer drops constant columns and centers the rest") {
  Eigen::MatrixXd rows(4, 3);
  rows << 1, 5, 0, 2, 5, 1, 3, 5, 0, 4, 5, 1;
  const Standardizer s = Standardizer::fit(rows);
  CHECK(s.output_dim() == 2);
  CHECK(s.kept == std::vector<Eigen::Index>{0, 2});
  const Eigen::MatrixXd z = s.apply(rows);
  CHECK(std::abs(z.col(0).mean()) < 1e-15);
  CHECK(z.col(0).squaredNorm() / 3.0 == doctest::Approx(1.0));
  CHECK(error_code_of([&] { s.apply(Eigen::MatrixXd::Zero(2, 2)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("pivoted Cholesky reproduces the Gram matrix") {
  CounterRng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index m = 5 + static_cast<Eigen::Index>(rng.below(80));
    Eigen::MatrixXd rows = random_matrix(rng, m, 2);
    rows.row(1) = rows.row(0);
    const GaussianKernelParams k{0.5 + rng.uniform()};
    const LowRankFactor lr = pivoted_cholesky(rows, k, kLowRankTol);
    const Eigen::MatrixXd g = gram_matrix(rows, k);
    CHECK(lr.rank() < m);  // the duplicate cannot be a second pivot
    CHECK((g - lr.l * lr.l.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    for (Eigen::Index c = 0; c < lr.rank(); ++c) {
      for (Eigen::Index r = c + 1; r < lr.rank(); ++r) CHECK(lr.l(lr.pivots[c], r) == 0.0);
    }
  }
}
