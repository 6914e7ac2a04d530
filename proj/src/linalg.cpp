#include "constsgd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace constsgd {

namespace {

void require_square(const Matrix& m, const char* name) {
  if (m.rows() != m.cols()) {
    throw ShapeError(std::string(name) + " must be square, got " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()));
  }
}

// Position of (i, j), i <= j, in the packed upper triangle.
inline Eigen::Index packed_index(Eigen::Index i, Eigen::Index j, Eigen::Index n) {
  if (i > j) std::swap(i, j);
  return i * n - i * (i - 1) / 2 + (j - i);
}

Vector pack_upper(const Matrix& m) {
  const Eigen::Index n = m.rows();
  Vector v(n * (n + 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) v(packed_index(i, j, n)) = m(i, j);
  return v;
}

Matrix unpack_symmetric(const Vector& v, Eigen::Index n) {
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) m(i, j) = m(j, i) = v(packed_index(i, j, n));
  return m;
}

}  // namespace

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

bool is_psd(const Matrix& m) {
  if (!is_symmetric(m)) return false;
  if (m.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  const double largest = std::max(ev.maxCoeff(), 0.0);
  return ev.minCoeff() >= -kPsdTolerance * largest;
}

double relative_frobenius_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("relative_frobenius_error: shape mismatch");
  const double denom = b.norm();
  const double diff = (a - b).norm();
  return denom > 0.0 ? diff / denom : diff;
}

double min_real_eigenvalue(const Matrix& m) {
  require_square(m, "matrix");
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().real().minCoeff();
}

double spectral_radius(const Matrix& m) {
  require_square(m, "matrix");
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
  require_square(a, "A");
  require_square(q, "Q");
  if (a.rows() != q.rows()) {
    throw ShapeError("solve_lyapunov: A is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " but Q is " + std::to_string(q.rows()) + "x" + std::to_string(q.cols()));
  }
  if (!a.allFinite() || !q.allFinite()) throw std::invalid_argument("solve_lyapunov: non-finite input");
  if (!is_symmetric(q, 1e-8)) throw std::invalid_argument("solve_lyapunov: Q must be symmetric");
  const Eigen::Index n = a.rows();
  if (n == 0) return Matrix(0, 0);

  const double min_re = min_real_eigenvalue(a);
  if (!(min_re > 0.0)) {
    throw StabilityError("solve_lyapunov: drift matrix is not stable (min real eigenvalue " +
                         std::to_string(min_re) + ")");
  }

  // Row (i,j) of the packed system: sum_k A_ik X_kj + sum_k X_ik A_jk = Q_ij.
  const Eigen::Index m = n * (n + 1) / 2;
  Matrix op = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const Eigen::Index row = packed_index(i, j, n);
      for (Eigen::Index k = 0; k < n; ++k) {
        op(row, packed_index(k, j, n)) += a(i, k);
        op(row, packed_index(i, k, n)) += a(j, k);
      }
    }
  }

  const Matrix qs = symmetrize(q);
  const Vector rhs = pack_upper(qs);
  Eigen::PartialPivLU<Matrix> lu(op);
  Vector x = lu.solve(rhs);
  x += lu.solve(rhs - op * x);

  Matrix sigma = unpack_symmetric(x, n);
  if (!sigma.allFinite()) throw StabilityError("solve_lyapunov: solution is not finite");
  return sigma;
}

double logdet_pd(const Matrix& m) {
  require_square(m, "matrix");
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) throw FactorizationError("logdet_pd: matrix is not positive definite");
  const Vector diag = llt.matrixLLT().diagonal();
  double s = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag(i) > 0.0)) throw FactorizationError("logdet_pd: matrix is not positive definite");
    s += std::log(diag(i));
  }
  return 2.0 * s;
}

Matrix inverse_pd(const Matrix& m) {
  require_square(m, "matrix");
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) throw FactorizationError("inverse_pd: matrix is not positive definite");
  return symmetrize(llt.solve(Matrix::Identity(m.rows(), m.cols())));
}

Matrix jitter_if_singular(const Matrix& m) {
  require_square(m, "matrix");
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) return m;
  const double p = static_cast<double>(m.rows());
  const double jitter = 1e-12 * m.trace() / p;
  return m + jitter * Matrix::Identity(m.rows(), m.cols());
}

Matrix psd_factor(const Matrix& m) {
  require_square(m, "matrix");
  const Eigen::Index p = m.rows();
  const double tr = m.trace();
  if (tr == 0.0 && m.cwiseAbs().maxCoeff() == 0.0) return Matrix::Zero(p, p);
  if (!is_psd(m)) throw FactorizationError("psd_factor: matrix is not positive semidefinite");

  const Matrix ms = symmetrize(m);
  double jitter = 0.0;
  for (int attempt = 0; attempt < 7; ++attempt) {
    Eigen::LLT<Matrix> llt(ms + jitter * Matrix::Identity(p, p));
    if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) {
      return llt.matrixL();
    }
    jitter = jitter == 0.0 ? 1e-12 * tr / static_cast<double>(p) : jitter * 10.0;
  }
  throw FactorizationError("psd_factor: Cholesky failed even with jitter");
}

}  // namespace constsgd
