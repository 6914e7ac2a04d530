#include "constsgd/sampler.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace constsgd {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void ProblemOracle::sample_gradient(const Vector& theta, int batch, std::mt19937_64& rng, Vector& out) const {
  const Eigen::Index n = problem_.num_examples();
  out = (problem_.lambda() / static_cast<double>(n)) * theta;
  const double w = 1.0 / static_cast<double>(batch);
  if (batch == n) {
    for (Eigen::Index i = 0; i < n; ++i) problem_.accumulate_likelihood_gradient(theta, i, w, out);
    return;
  }
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  for (int s = 0; s < batch; ++s) problem_.accumulate_likelihood_gradient(theta, pick(rng), w, out);
}

QuadraticOracle::QuadraticOracle(Matrix a, Matrix noise_cov, Eigen::Index num_examples)
    : a_(std::move(a)), factor_(psd_factor(noise_cov)), n_(num_examples) {
  if (a_.rows() != a_.cols() || a_.rows() != factor_.rows()) throw ShapeError("QuadraticOracle: dimension mismatch");
  if (n_ < 1) throw std::invalid_argument("QuadraticOracle: num_examples must be >= 1");
}

void QuadraticOracle::sample_gradient(const Vector& theta, int batch, std::mt19937_64& rng, Vector& out) const {
  out.noalias() = a_ * theta;
  if (batch == n_) return;
  std::normal_distribution<double> normal;
  Vector eta(dim());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = normal(rng);
  out.noalias() += (1.0 / std::sqrt(static_cast<double>(batch))) * (factor_ * eta);
}

void SamplerConfig::validate(Eigen::Index dim, Eigen::Index num_examples) const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("sampler: epsilon must be > 0");
  if (minibatch < 1) throw std::invalid_argument("sampler: minibatch must be >= 1");
  if (minibatch > num_examples) throw std::invalid_argument("sampler: minibatch must not exceed N");
  if (thin < 1) throw std::invalid_argument("sampler: thin must be >= 1");
  if (n_samples < 1) throw std::invalid_argument("sampler: n_samples must be >= 1");
  if (!(temperature >= 0.0)) throw std::invalid_argument("sampler: temperature must be >= 0");
  if (burn_in && *burn_in < 0) throw std::invalid_argument("sampler: burn_in must be >= 0");
  if (preconditioner && (preconditioner->rows() != dim || preconditioner->cols() != dim)) {
    throw ShapeError("sampler: preconditioner has wrong shape");
  }
  if (injected_noise && (injected_noise->rows() != dim || injected_noise->cols() != dim)) {
    throw ShapeError("sampler: injected noise has wrong shape");
  }
}

long default_burn_in(const Matrix& drift) {
  const double rate = min_real_eigenvalue(drift);
  if (!(rate > 0.0)) throw StabilityError("default_burn_in: drift is not stable");
  return static_cast<long>(std::ceil(10.0 / rate));
}

namespace {

enum class Algorithm { Sgd, Sgld, Sgfs };

const char* algorithm_name(Algorithm algo) {
  switch (algo) {
    case Algorithm::Sgd: return "sgd";
    case Algorithm::Sgld: return "sgld";
    case Algorithm::Sgfs: return "sgfs";
  }
  return "unknown";
}

long resolve_burn_in(Algorithm algo, const GradientOracle& oracle, const Vector& theta0, const SamplerConfig& config) {
  if (config.burn_in) return *config.burn_in;
  const std::optional<Matrix> curvature = oracle.curvature(theta0);
  if (!curvature) throw std::invalid_argument("sampler: burn_in required when the oracle has no curvature");
  Matrix drift;
  if (algo == Algorithm::Sgld) {
    drift = (0.5 * config.epsilon * static_cast<double>(oracle.num_examples())) * *curvature;
  } else if (config.preconditioner) {
    drift = config.epsilon * *config.preconditioner * *curvature;
  } else {
    drift = config.epsilon * *curvature;
  }
  return default_burn_in(drift);
}

void check_divergence(const Vector& theta, long iteration) {
  if (!theta.allFinite() || theta.lpNorm<Eigen::Infinity>() > kDivergenceThreshold) {
    throw DivergenceError("sampler diverged", iteration);
  }
}

Chain run_chain(Algorithm algo, const GradientOracle& oracle, const Vector& theta0, const SamplerConfig& config) {
  const Eigen::Index p = oracle.dim();
  config.validate(p, oracle.num_examples());
  if (theta0.size() != p) throw ShapeError("sampler: theta0 has wrong length");

  Chain chain;
  chain.algorithm = algorithm_name(algo);
  chain.config = config;
  chain.burn_in = resolve_burn_in(algo, oracle, theta0, config);
  chain.iterates.resize(config.n_samples, p);

  std::mt19937_64 batch_rng(derive_seed(config.seed, 0));
  std::mt19937_64 noise_rng(derive_seed(config.seed, 1));
  std::normal_distribution<double> normal;

  const double eps = config.epsilon;
  const double sqrt_eps = std::sqrt(eps);
  const double langevin_noise = std::sqrt(eps * config.temperature);
  const double langevin_scale = 0.5 * eps * static_cast<double>(oracle.num_examples());
  const Matrix* h = config.preconditioner ? &*config.preconditioner : nullptr;

  // H E for SGFS; skipped entirely when no noise is injected.
  std::optional<Matrix> noise_map;
  if (algo == Algorithm::Sgfs && config.injected_noise && config.injected_noise->cwiseAbs().maxCoeff() > 0.0) {
    const Matrix e = psd_factor(*config.injected_noise);
    noise_map = h ? Matrix(*h * e) : e;
  }

  Vector theta = theta0;
  Vector grad(p);
  Vector eta(p);
  const long total = chain.burn_in + config.n_samples * config.thin;
  long recorded = 0;
  for (long t = 0; t < total; ++t) {
    oracle.sample_gradient(theta, config.minibatch, batch_rng, grad);
    switch (algo) {
      case Algorithm::Sgd:
      case Algorithm::Sgfs:
        if (h) {
          theta.noalias() -= eps * (*h * grad);
        } else {
          theta.noalias() -= eps * grad;
        }
        if (noise_map) {
          for (Eigen::Index i = 0; i < p; ++i) eta(i) = normal(noise_rng);
          theta.noalias() += sqrt_eps * (*noise_map * eta);
        }
        break;
      case Algorithm::Sgld:
        theta.noalias() -= langevin_scale * grad;
        if (langevin_noise > 0.0) {
          for (Eigen::Index i = 0; i < p; ++i) eta(i) = normal(noise_rng);
          theta.noalias() += langevin_noise * eta;
        }
        break;
    }
    check_divergence(theta, t);
    if (t >= chain.burn_in && (t - chain.burn_in) % config.thin == config.thin - 1) {
      chain.iterates.row(recorded++) = theta.transpose();
    }
  }
  return chain;
}

}  // namespace

Chain run_constant_sgd(const GradientOracle& oracle, const Vector& theta0, const SamplerConfig& config) {
  return run_chain(Algorithm::Sgd, oracle, theta0, config);
}

Chain run_constant_sgd(const ModelProblem& problem, const Vector& theta0, const SamplerConfig& config) {
  return run_chain(Algorithm::Sgd, ProblemOracle(problem), theta0, config);
}

Chain run_sgld(const GradientOracle& oracle, const Vector& theta0, const SamplerConfig& config) {
  return run_chain(Algorithm::Sgld, oracle, theta0, config);
}

Chain run_sgld(const ModelProblem& problem, const Vector& theta0, const SamplerConfig& config) {
  return run_chain(Algorithm::Sgld, ProblemOracle(problem), theta0, config);
}

Chain run_sgfs(const GradientOracle& oracle, const Vector& theta0, const SamplerConfig& config) {
  return run_chain(Algorithm::Sgfs, oracle, theta0, config);
}

Chain run_sgfs(const ModelProblem& problem, const Vector& theta0, const SamplerConfig& config) {
  return run_chain(Algorithm::Sgfs, ProblemOracle(problem), theta0, config);
}

Chain run_ou_euler(const Matrix& a, const Matrix& b_scaled, const Vector& theta0, double dt, long steps,
                   std::uint64_t seed, long burn_in) {
  if (a.rows() != a.cols() || b_scaled.rows() != a.rows() || theta0.size() != a.rows()) {
    throw ShapeError("run_ou_euler: dimension mismatch");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("run_ou_euler: dt must be > 0");
  if (steps < 1 || burn_in < 0) throw std::invalid_argument("run_ou_euler: steps must be >= 1, burn_in >= 0");
  if (!(min_real_eigenvalue(a) > 0.0)) throw StabilityError("run_ou_euler: drift matrix is not stable");
  if (!(dt * spectral_radius(a) < 2.0)) throw StabilityError("run_ou_euler: dt too large for the drift");

  Chain chain;
  chain.algorithm = "ou-euler";
  chain.config.epsilon = dt;
  chain.config.n_samples = steps;
  chain.config.burn_in = burn_in;
  chain.config.seed = seed;
  chain.burn_in = burn_in;
  chain.iterates.resize(steps, a.rows());

  std::mt19937_64 rng(derive_seed(seed, 1));
  std::normal_distribution<double> normal;
  const Matrix step = Matrix::Identity(a.rows(), a.cols()) - dt * a;
  const Matrix diffusion = std::sqrt(dt) * b_scaled;
  Vector theta = theta0;
  Vector eta(b_scaled.cols());
  Vector next(a.rows());
  for (long t = 0; t < burn_in + steps; ++t) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = normal(rng);
    next.noalias() = step * theta;
    next.noalias() += diffusion * eta;
    theta.swap(next);
    check_divergence(theta, t);
    if (t >= burn_in) chain.iterates.row(t - burn_in) = theta.transpose();
  }
  return chain;
}

GaussianApprox empirical_moments(const Chain& chain) {
  const Eigen::Index n = chain.iterates.rows();
  if (n < 2) throw std::invalid_argument("empirical_moments: need at least two samples");
  GaussianApprox out;
  out.mean = chain.iterates.colwise().mean().transpose();
  const RowMatrix centered = chain.iterates.rowwise() - out.mean.transpose();
  out.covariance = symmetrize((centered.transpose() * centered) / static_cast<double>(n - 1));
  return out;
}

}  // namespace constsgd
