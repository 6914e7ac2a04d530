#include <random>

#include <gtest/gtest.h>

#include "constsgd/linalg.hpp"
#include "oracles.hpp"

using namespace constsgd;

TEST(Lyapunov, ScalarCase) {
  Matrix a(1, 1), q(1, 1);
  a << 2.0;
  q << 4.0;
  EXPECT_NEAR(solve_lyapunov(a, q)(0, 0), 1.0, 1e-14);
}

TEST(Lyapunov, DiagonalCase) {
  const Matrix a = Vector::LinSpaced(4, 1.0, 4.0).asDiagonal();
  const Matrix q = Matrix::Identity(4, 4);
  const Matrix x = solve_lyapunov(a, q);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(x(i, i), 1.0 / (2.0 * a(i, i)), 1e-14);
  EXPECT_NEAR((x - Matrix(x.diagonal().asDiagonal())).norm(), 0.0, 1e-14);
}

TEST(Lyapunov, MatchesKroneckerOracleOnNonsymmetricDrift) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index d = 2 + trial % 7;
    const Matrix a = oracle::random_stable(d, rng);
    const Matrix q = oracle::random_spd(d, 50.0, rng);
    const Matrix x = solve_lyapunov(a, q);
    EXPECT_LE((a * x + x * a.transpose() - q).norm() / q.norm(), 1e-10);
    EXPECT_LE(oracle::rel_frob(x, oracle::kronecker_lyapunov(a, q)), 1e-9);
    EXPECT_TRUE(is_symmetric(x));
  }
}

TEST(Lyapunov, SymmetricDriftMatchesEigenbasisOracle) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = oracle::random_spd(5, 100.0, rng);
    const Matrix q = oracle::random_spd(5, 10.0, rng);
    EXPECT_LE(oracle::rel_frob(solve_lyapunov(a, q), oracle::lyapunov_symmetric_eig(a, q)), 1e-10);
  }
}

TEST(Lyapunov, PsdRightHandSideGivesPsdSolution) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = oracle::random_stable(4, rng);
    Matrix g = Matrix::Random(4, 2);
    const Matrix q = g * g.transpose();
    EXPECT_TRUE(is_psd(solve_lyapunov(a, q)));
  }
}

TEST(Lyapunov, Errors) {
  Matrix a(2, 2);
  a << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(solve_lyapunov(a, Matrix::Identity(2, 2)), StabilityError);
  EXPECT_THROW(solve_lyapunov(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), ShapeError);
  EXPECT_THROW(solve_lyapunov(Matrix::Identity(2, 3), Matrix::Identity(2, 3)), ShapeError);
  Matrix q(2, 2);
  q << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(solve_lyapunov(Matrix::Identity(2, 2), q), std::invalid_argument);
}

TEST(Factorizations, LogdetAndInverse) {
  std::mt19937_64 rng(14);
  const Matrix m = oracle::random_spd(6, 1e3, rng);
  EXPECT_NEAR(logdet_pd(m), std::log(m.determinant()), 1e-10);
  EXPECT_LE((inverse_pd(m) * m - Matrix::Identity(6, 6)).norm(), 1e-10);
  EXPECT_THROW(logdet_pd(-Matrix::Identity(2, 2)), FactorizationError);
}

TEST(Factorizations, PsdFactorHandlesSingularAndZero) {
  Matrix v(3, 1);
  v << 1.0, 2.0, 3.0;
  const Matrix rank1 = v * v.transpose();
  const Matrix l = psd_factor(rank1);
  EXPECT_LE(relative_frobenius_error(l * l.transpose(), rank1), 1e-9);
  EXPECT_EQ(psd_factor(Matrix::Zero(3, 3)).norm(), 0.0);
  EXPECT_THROW(psd_factor(-Matrix::Identity(2, 2)), FactorizationError);
}

TEST(Eigenvalues, RadiusAndMinReal) {
  Matrix m(2, 2);
  m << 0.0, -2.0, 2.0, 1.0;  // eigenvalues 0.5 +- i sqrt(15)/2
  EXPECT_NEAR(min_real_eigenvalue(m), 0.5, 1e-12);
  EXPECT_NEAR(spectral_radius(m), 2.0, 1e-12);
}
