#pragma once

#include <Eigen/Dense>

#include "constsgd/errors.hpp"

namespace constsgd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative tolerance used when deciding whether a matrix is symmetric.
inline constexpr double kSymmetryTolerance = 1e-10;

/// Eigenvalues down to -kPsdTolerance * (largest eigenvalue) count as zero.
inline constexpr double kPsdTolerance = 1e-10;

/// (M + M^T) / 2.
Matrix symmetrize(const Matrix& m);

bool is_symmetric(const Matrix& m, double rel_tol = kSymmetryTolerance);

/// True when m is symmetric and its smallest eigenvalue is at least
/// -kPsdTolerance times its largest.
bool is_psd(const Matrix& m);

/// ||a - b||_F / ||b||_F (plain ||a||_F when b is zero).
double relative_frobenius_error(const Matrix& a, const Matrix& b);

/// Solves the continuous Lyapunov equation A X + X A^T = Q for symmetric X.
///
/// A must be stable in the sense used throughout the library: every
/// eigenvalue has a strictly positive real part (the drift of d theta = -A theta dt).
/// The solve works on the D(D+1)/2 unknowns of the symmetric solution, which is
/// the Kronecker-vectorized system (I (x) A + A (x) I) vec X = vec Q restricted to
/// symmetric matrices, followed by one step of iterative refinement.
///
/// Throws ShapeError on dimension mismatch, std::invalid_argument when Q is not
/// symmetric, StabilityError when A is not stable.
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

/// Smallest real part among the eigenvalues of a square matrix.
double min_real_eigenvalue(const Matrix& m);

/// Largest modulus among the eigenvalues of a square matrix.
double spectral_radius(const Matrix& m);

/// log det via Cholesky. Throws FactorizationError if m is not positive definite.
double logdet_pd(const Matrix& m);

/// Inverse via Cholesky, symmetrized. Throws FactorizationError if m is not PD.
Matrix inverse_pd(const Matrix& m);

/// Returns m unchanged if its Cholesky factorization succeeds, otherwise
/// m + 1e-12 * trace(m) / P * I.
Matrix jitter_if_singular(const Matrix& m);

/// Lower-triangular factor L with L L^T = m (jittered when m is singular).
/// A zero matrix yields a zero factor.
Matrix psd_factor(const Matrix& m);

}  // namespace constsgd
