#pragma once

#include <optional>
#include <string>

#include "constsgd/linalg.hpp"

namespace constsgd {

// Conventions for this header:
//   A          Hessian of the average loss at the optimum (symmetric PD)
//   noise_cov  per-example gradient-noise covariance B B^T
//   S          minibatch size, N number of examples
// The reference posterior is N(theta*, (N A)^{-1}).

struct GaussianApprox {
  Vector mean;
  Matrix covariance;
};

/// Step size, minibatch size and preconditioner selected for a sampler.
struct TuningResult {
  double epsilon = 0.0;
  int minibatch = 1;
  Matrix preconditioner;                 // H (diagonal or scalar modes are stored densely)
  std::optional<Matrix> injected_noise;  // E E^T, SGFS only
  bool step_downgraded = false;          // set by the discrete stability guard
  double requested_epsilon = 0.0;        // epsilon before any downgrade
};

/// Stationary covariance of preconditioned constant SGD in the OU limit:
/// (HA) Sigma + Sigma (HA)^T = (eps/S) H BB^T H^T. H defaults to the identity.
Matrix predicted_covariance_sgd(const Matrix& a, const Matrix& noise_cov, double eps, int minibatch,
                                const std::optional<Matrix>& preconditioner = std::nullopt);

/// Stationary covariance of SGFS: (HA) Sigma + Sigma (HA)^T = H (eps BB^T + EE^T) H^T.
/// For minibatch size S pass BB^T / S as noise_cov.
Matrix predicted_covariance_sgfs(const Matrix& a, const Matrix& noise_cov, const Matrix& injected_noise,
                                 const Matrix& preconditioner, double eps);

/// Stationary covariance of the N-scaled Langevin update
/// theta <- theta - (eps/2) N g_S + sqrt(eps) eta, in the OU limit:
/// (N/2)(A Sigma + Sigma A) = I + (eps N^2 / (4 S)) BB^T.
Matrix predicted_covariance_sgld(const Matrix& a, const Matrix& noise_cov, double eps, int minibatch, double n);

/// KL(N(m, Sigma) || N(m, (N A)^{-1})) = 1/2 (N Tr(A Sigma) - log|NA| - log|Sigma| - D).
double kl_to_posterior(const Matrix& sigma, const Matrix& a, double n);

/// KL(q || p) between two Gaussians with arbitrary means.
double gaussian_kl(const GaussianApprox& q, const GaussianApprox& p);

/// Constant learning rate minimizing the KL: eps* = 2 D S / (N Tr(BB^T)).
/// Throws DegenerateError when the noise trace is not positive.
double optimal_scalar_rate(const Matrix& noise_cov, int minibatch, double n);

/// H* = (2S / (eps N)) (BB^T)^{-1}. With this H the OU covariance equals (NA)^{-1}.
/// A singular BB^T is jittered (1e-12 * trace / P) before inversion.
Matrix optimal_full_preconditioner(const Matrix& noise_cov, double eps, int minibatch, double n);

/// H*_kk = 2S / (eps N BB^T_kk). Returns the diagonal.
Vector optimal_diag_preconditioner(const Matrix& noise_cov, double eps, int minibatch, double n);

/// Diagonal of G^{-1} with G = sqrt(diag(BB^T)).
Vector sqrt_preconditioner(const Matrix& noise_cov);

/// Rate for SGD preconditioned with G^{-1}: eps* = 2 D S / (N Tr(BB^T G^{-1})).
double optimal_sqrt_rate(const Matrix& noise_cov, int minibatch, double n);

/// H* = (2/N) (eps BB^T + EE^T)^{-1}; the SGFS OU covariance then equals (NA)^{-1}.
Matrix sgfs_optimal_preconditioner(const Matrix& noise_cov, const Matrix& injected_noise, double eps, double n);

enum class SgfsApproximation { Diagonal, Scalar };

/// Diagonal:  H_kk = (2/N) / (eps BB^T_kk + EE^T_kk).
/// Scalar:    H = (2D/N) / sum_k (eps BB^T_kk + EE^T_kk), returned as a constant vector.
Vector sgfs_approx_preconditioner(const Matrix& noise_cov, const Matrix& injected_noise, double eps, double n,
                                  SgfsApproximation mode);

/// Diagonal injected noise EE^T_kk = max(0, 2/(h_max N) - eps BB^T_kk). With it the
/// diagonal SGFS preconditioner satisfies H_kk <= h_max in every coordinate.
Vector sgfs_stability_noise(double h_max, double eps, const Matrix& noise_cov, double n);

/// max |eigenvalue| of eps * H * A, the contraction rate of the linearized update.
double step_spectral_radius(double eps, const Matrix& preconditioner, const Matrix& a);

/// Discrete stability guard: if eps * H * A has spectral radius >= 2, returns eps
/// scaled so that the radius becomes `target_radius`; otherwise eps unchanged.
struct GuardedStep {
  double epsilon;
  double radius;  // spectral radius at the returned epsilon
  bool downgraded;
};
GuardedStep guard_step_size(double eps, const Matrix& preconditioner, const Matrix& a, double target_radius = 1.0);

/// Minimum of the OU KL over diagonal preconditioners at fixed eps and S.
///
/// Starts from `initial` (typically optimal_diag_preconditioner) and runs BFGS
/// on log H_kk with the exact gradient obtained from two Lyapunov solves.
struct DiagonalRefinement {
  Vector diagonal;
  double kl = 0.0;
  int iterations = 0;
};
DiagonalRefinement refine_diag_preconditioner(const Matrix& a, const Matrix& noise_cov, double eps, int minibatch,
                                              double n, const Vector& initial, int max_iters = 200,
                                              double grad_tol = 1e-9);

}  // namespace constsgd
