#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "constsgd/linalg.hpp"
#include "constsgd/model.hpp"
#include "constsgd/stationary.hpp"

namespace constsgd {

/// SplitMix64 finalizer applied to (seed, stream); gives independent
/// generator seeds for the streams of one chain or the rows of one table.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Source of stochastic gradients of an average loss.
class GradientOracle {
 public:
  virtual ~GradientOracle() = default;

  virtual Eigen::Index dim() const = 0;
  virtual Eigen::Index num_examples() const = 0;

  /// Writes a size-`batch` minibatch gradient at theta into out. batch == N
  /// means the full (noise-free) gradient.
  virtual void sample_gradient(const Vector& theta, int batch, std::mt19937_64& rng, Vector& out) const = 0;

  /// Hessian of the average loss, when the oracle knows it. Used for default burn-in.
  virtual std::optional<Matrix> curvature(const Vector& theta) const = 0;
};

/// Uniform with-replacement minibatches of a ModelProblem; a batch of size N
/// is the full gradient.
class ProblemOracle final : public GradientOracle {
 public:
  explicit ProblemOracle(const ModelProblem& problem) : problem_(problem) {}

  Eigen::Index dim() const override { return problem_.num_params(); }
  Eigen::Index num_examples() const override { return problem_.num_examples(); }
  void sample_gradient(const Vector& theta, int batch, std::mt19937_64& rng, Vector& out) const override;
  std::optional<Matrix> curvature(const Vector& theta) const override { return hessian(problem_, theta); }

 private:
  const ModelProblem& problem_;
};

/// Quadratic loss 1/2 theta^T A theta whose minibatch gradients carry
/// Gaussian noise N(0, C / S). No dataset behind it.
class QuadraticOracle final : public GradientOracle {
 public:
  QuadraticOracle(Matrix a, Matrix noise_cov, Eigen::Index num_examples);

  Eigen::Index dim() const override { return a_.rows(); }
  Eigen::Index num_examples() const override { return n_; }
  void sample_gradient(const Vector& theta, int batch, std::mt19937_64& rng, Vector& out) const override;
  std::optional<Matrix> curvature(const Vector&) const override { return a_; }

 private:
  Matrix a_;
  Matrix factor_;
  Eigen::Index n_;
};

struct SamplerConfig {
  double epsilon = 0.0;
  int minibatch = 1;
  std::optional<Matrix> preconditioner;  // H, identity when absent
  std::optional<Matrix> injected_noise;  // E E^T (SGFS)
  double temperature = 1.0;              // scales the SGLD noise variance; 0 disables it
  std::optional<long> burn_in;           // default: ten relaxation times of the slowest mode
  long n_samples = 1000;
  long thin = 1;
  std::uint64_t seed = 0;

  void validate(Eigen::Index dim, Eigen::Index num_examples) const;
};

/// Recorded iterates after burn-in and thinning, one row per sample.
struct Chain {
  RowMatrix iterates;
  std::string algorithm;
  SamplerConfig config;
  long burn_in = 0;
};

/// Iterates whose sup-norm exceeds this abort the chain.
inline constexpr double kDivergenceThreshold = 1e8;

/// 10 / (smallest real eigenvalue of the per-iteration drift matrix), rounded up.
long default_burn_in(const Matrix& drift);

/// theta <- theta - eps H g_S(theta).
Chain run_constant_sgd(const GradientOracle& oracle, const Vector& theta0, const SamplerConfig& config);
Chain run_constant_sgd(const ModelProblem& problem, const Vector& theta0, const SamplerConfig& config);

/// theta <- theta - (eps/2) N g_S(theta) + sqrt(eps) eta, eta ~ N(0, I).
/// Targets exp(-N L(theta)) as eps -> 0. The preconditioner field is ignored.
Chain run_sgld(const GradientOracle& oracle, const Vector& theta0, const SamplerConfig& config);
Chain run_sgld(const ModelProblem& problem, const Vector& theta0, const SamplerConfig& config);

/// theta <- theta - eps H g_S(theta) + sqrt(eps) H E eta with E E^T = injected_noise.
/// Minibatch indices and injected noise come from separate streams, so a zero
/// injected noise reproduces run_constant_sgd exactly.
Chain run_sgfs(const GradientOracle& oracle, const Vector& theta0, const SamplerConfig& config);
Chain run_sgfs(const ModelProblem& problem, const Vector& theta0, const SamplerConfig& config);

/// Euler-Maruyama for d theta = -A theta dt + B dW:
/// theta <- theta - A theta dt + B sqrt(dt) eta. Records `steps` iterates after
/// `burn_in` discarded ones. Requires A stable and dt * max|eig(A)| < 2.
Chain run_ou_euler(const Matrix& a, const Matrix& b_scaled, const Vector& theta0, double dt, long steps,
                   std::uint64_t seed, long burn_in = 0);

/// Sample mean and unbiased (n - 1) sample covariance.
GaussianApprox empirical_moments(const Chain& chain);

}  // namespace constsgd
