#include "constsgd/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace constsgd {

namespace {

void require_same_square(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
    throw ShapeError(std::string(what) + ": dimension mismatch");
  }
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive");
}

Vector positive_diagonal(const Matrix& m, const char* what) {
  Vector d = m.diagonal();
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    if (!(d(k) > 0.0)) {
      throw DegenerateError(std::string(what) + ": diagonal entry " + std::to_string(k) + " is not positive");
    }
  }
  return d;
}

}  // namespace

Matrix predicted_covariance_sgd(const Matrix& a, const Matrix& noise_cov, double eps, int minibatch,
                                const std::optional<Matrix>& preconditioner) {
  require_same_square(a, noise_cov, "predicted_covariance_sgd");
  require_positive(eps, "eps");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  const double scale = eps / static_cast<double>(minibatch);
  if (!preconditioner) return solve_lyapunov(a, scale * symmetrize(noise_cov));
  const Matrix& h = *preconditioner;
  require_same_square(a, h, "predicted_covariance_sgd");
  return solve_lyapunov(h * a, symmetrize(scale * h * noise_cov * h.transpose()));
}

Matrix predicted_covariance_sgfs(const Matrix& a, const Matrix& noise_cov, const Matrix& injected_noise,
                                 const Matrix& preconditioner, double eps) {
  require_same_square(a, noise_cov, "predicted_covariance_sgfs");
  require_same_square(a, injected_noise, "predicted_covariance_sgfs");
  require_same_square(a, preconditioner, "predicted_covariance_sgfs");
  require_positive(eps, "eps");
  const Matrix& h = preconditioner;
  const Matrix combined = eps * noise_cov + injected_noise;
  return solve_lyapunov(h * a, symmetrize(h * combined * h.transpose()));
}

Matrix predicted_covariance_sgld(const Matrix& a, const Matrix& noise_cov, double eps, int minibatch, double n) {
  require_same_square(a, noise_cov, "predicted_covariance_sgld");
  require_positive(eps, "eps");
  require_positive(n, "N");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  const Eigen::Index d = a.rows();
  const Matrix q = Matrix::Identity(d, d) + (eps * n * n / (4.0 * minibatch)) * symmetrize(noise_cov);
  return solve_lyapunov(0.5 * n * a, q);
}

double kl_to_posterior(const Matrix& sigma, const Matrix& a, double n) {
  require_same_square(sigma, a, "kl_to_posterior");
  require_positive(n, "N");
  const double d = static_cast<double>(a.rows());
  const double trace = (a * sigma).trace();
  return 0.5 * (n * trace - logdet_pd(n * a) - logdet_pd(sigma) - d);
}

double gaussian_kl(const GaussianApprox& q, const GaussianApprox& p) {
  require_same_square(q.covariance, p.covariance, "gaussian_kl");
  if (q.mean.size() != p.mean.size() || q.mean.size() != q.covariance.rows()) {
    throw ShapeError("gaussian_kl: mean/covariance dimension mismatch");
  }
  Eigen::LLT<Matrix> llt(symmetrize(p.covariance));
  if (llt.info() != Eigen::Success) throw FactorizationError("gaussian_kl: reference covariance is not PD");
  const Vector diff = p.mean - q.mean;
  const double trace = llt.solve(q.covariance).trace();
  const double maha = diff.dot(llt.solve(diff));
  const double d = static_cast<double>(q.mean.size());
  return 0.5 * (trace + maha - d + logdet_pd(p.covariance) - logdet_pd(q.covariance));
}

double optimal_scalar_rate(const Matrix& noise_cov, int minibatch, double n) {
  if (noise_cov.rows() != noise_cov.cols()) throw ShapeError("optimal_scalar_rate: noise covariance must be square");
  require_positive(n, "N");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  const double tr = noise_cov.trace();
  if (!(tr > 0.0)) throw DegenerateError("optimal_scalar_rate: noise covariance has zero trace");
  const double d = static_cast<double>(noise_cov.rows());
  return 2.0 * d * minibatch / (n * tr);
}

Matrix optimal_full_preconditioner(const Matrix& noise_cov, double eps, int minibatch, double n) {
  require_positive(eps, "eps");
  require_positive(n, "N");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  const Matrix inv = inverse_pd(jitter_if_singular(noise_cov));
  return (2.0 * minibatch / (eps * n)) * inv;
}

Vector optimal_diag_preconditioner(const Matrix& noise_cov, double eps, int minibatch, double n) {
  require_positive(eps, "eps");
  require_positive(n, "N");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  const Vector d = positive_diagonal(noise_cov, "optimal_diag_preconditioner");
  return (2.0 * minibatch / (eps * n)) * d.cwiseInverse();
}

Vector sqrt_preconditioner(const Matrix& noise_cov) {
  return positive_diagonal(noise_cov, "sqrt_preconditioner").cwiseSqrt().cwiseInverse();
}

double optimal_sqrt_rate(const Matrix& noise_cov, int minibatch, double n) {
  require_positive(n, "N");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  const Vector g_inv = sqrt_preconditioner(noise_cov);
  // Tr(BB^T G^{-1}) = sum_k BB^T_kk / G_kk = sum_k sqrt(BB^T_kk).
  const double tr = noise_cov.diagonal().dot(g_inv);
  const double d = static_cast<double>(noise_cov.rows());
  return 2.0 * d * minibatch / (n * tr);
}

Matrix sgfs_optimal_preconditioner(const Matrix& noise_cov, const Matrix& injected_noise, double eps, double n) {
  require_same_square(noise_cov, injected_noise, "sgfs_optimal_preconditioner");
  require_positive(eps, "eps");
  require_positive(n, "N");
  const Matrix combined = eps * noise_cov + injected_noise;
  return (2.0 / n) * inverse_pd(jitter_if_singular(symmetrize(combined)));
}

Vector sgfs_approx_preconditioner(const Matrix& noise_cov, const Matrix& injected_noise, double eps, double n,
                                  SgfsApproximation mode) {
  require_same_square(noise_cov, injected_noise, "sgfs_approx_preconditioner");
  require_positive(eps, "eps");
  require_positive(n, "N");
  const Vector combined = eps * noise_cov.diagonal() + injected_noise.diagonal();
  for (Eigen::Index k = 0; k < combined.size(); ++k) {
    if (!(combined(k) > 0.0)) {
      throw DegenerateError("sgfs_approx_preconditioner: combined noise entry " + std::to_string(k) +
                            " is not positive");
    }
  }
  if (mode == SgfsApproximation::Diagonal) return (2.0 / n) * combined.cwiseInverse();
  const double d = static_cast<double>(combined.size());
  return Vector::Constant(combined.size(), 2.0 * d / (n * combined.sum()));
}

Vector sgfs_stability_noise(double h_max, double eps, const Matrix& noise_cov, double n) {
  require_positive(h_max, "h_max");
  require_positive(eps, "eps");
  require_positive(n, "N");
  if (noise_cov.rows() != noise_cov.cols()) throw ShapeError("sgfs_stability_noise: noise covariance must be square");
  const double floor = 2.0 / (h_max * n);
  const double two_over_n = 2.0 / n;
  Vector e(noise_cov.rows());
  for (Eigen::Index k = 0; k < e.size(); ++k) {
    const double grad_part = eps * noise_cov(k, k);
    double inject = std::max(0.0, floor - grad_part);
    if (inject > 0.0) {
      // Rounding in grad_part + inject may land just below the floor.
      while (two_over_n * (1.0 / (grad_part + inject)) > h_max) {
        inject = std::nextafter(inject, std::numeric_limits<double>::infinity());
      }
    }
    e(k) = inject;
  }
  return e;
}

double step_spectral_radius(double eps, const Matrix& preconditioner, const Matrix& a) {
  require_same_square(preconditioner, a, "step_spectral_radius");
  return spectral_radius(eps * preconditioner * a);
}

GuardedStep guard_step_size(double eps, const Matrix& preconditioner, const Matrix& a, double target_radius) {
  require_positive(eps, "eps");
  require_positive(target_radius, "target_radius");
  const double radius = step_spectral_radius(eps, preconditioner, a);
  if (radius < 2.0) return {eps, radius, false};
  const double scaled = eps * target_radius / radius;
  return {scaled, step_spectral_radius(scaled, preconditioner, a), true};
}

namespace {

struct KlAndGradient {
  double kl;
  Vector grad;  // with respect to log H_kk
};

KlAndGradient diag_kl_with_gradient(const Matrix& a, const Matrix& noise_cov, double eps, int minibatch, double n,
                                    const Vector& h) {
  const double scale = eps / static_cast<double>(minibatch);
  const Matrix hm = h.asDiagonal();
  const Matrix drift = hm * a;
  const Matrix sigma = solve_lyapunov(drift, symmetrize(scale * hm * noise_cov * hm));
  const double kl = kl_to_posterior(sigma, a, n);

  // Adjoint: drift^T P + P drift = N A - Sigma^{-1}; dKL = 1/2 Tr(P dR).
  const Matrix w = symmetrize(n * a - inverse_pd(sigma));
  const Matrix p = solve_lyapunov(drift.transpose(), w);
  const Matrix chp = noise_cov * hm * p;
  const Matrix asp = a * sigma * p;
  Vector grad(h.size());
  for (Eigen::Index k = 0; k < h.size(); ++k) grad(k) = h(k) * (scale * chp(k, k) - asp(k, k));
  return {kl, grad};
}

}  // namespace

DiagonalRefinement refine_diag_preconditioner(const Matrix& a, const Matrix& noise_cov, double eps, int minibatch,
                                              double n, const Vector& initial, int max_iters, double grad_tol) {
  require_same_square(a, noise_cov, "refine_diag_preconditioner");
  if (initial.size() != a.rows()) throw ShapeError("refine_diag_preconditioner: initial diagonal has wrong length");
  if (!(initial.array() > 0.0).all()) throw std::invalid_argument("refine_diag_preconditioner: initial must be > 0");
  require_positive(eps, "eps");
  require_positive(n, "N");

  const Eigen::Index d = initial.size();
  Vector x = initial.array().log().matrix();
  KlAndGradient cur = diag_kl_with_gradient(a, noise_cov, eps, minibatch, n, initial);
  Matrix inv_hess = Matrix::Identity(d, d);
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    if (cur.grad.lpNorm<Eigen::Infinity>() <= grad_tol) break;
    Vector dir = -inv_hess * cur.grad;
    if (dir.dot(cur.grad) >= 0.0) {
      inv_hess.setIdentity();
      dir = -cur.grad;
    }
    // Cap the step in log space so exp() stays well-behaved.
    const double max_step = dir.lpNorm<Eigen::Infinity>();
    double t = max_step > 2.0 ? 2.0 / max_step : 1.0;
    bool accepted = false;
    KlAndGradient next;
    Vector x_next;
    for (int ls = 0; ls < 50; ++ls) {
      x_next = x + t * dir;
      next = diag_kl_with_gradient(a, noise_cov, eps, minibatch, n, x_next.array().exp().matrix());
      if (next.kl <= cur.kl + 1e-4 * t * cur.grad.dot(dir)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    const Vector s = x_next - x;
    const Vector y = next.grad - cur.grad;
    const double sy = s.dot(y);
    if (sy > 1e-16) {
      const double rho = 1.0 / sy;
      const Matrix eye = Matrix::Identity(d, d);
      inv_hess = (eye - rho * s * y.transpose()) * inv_hess * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    x = x_next;
    cur = std::move(next);
  }
  return {x.array().exp().matrix(), cur.kl, iter};
}

}  // namespace constsgd
