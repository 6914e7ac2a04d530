#include "constsgd/pipeline.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace constsgd {

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Sgd: return "sgd";
    case SamplerKind::Sgld: return "sgld";
    case SamplerKind::Sgfs: return "sgfs";
  }
  return "unknown";
}

std::string to_string(Tuning tuning) {
  switch (tuning) {
    case Tuning::Scalar: return "scalar";
    case Tuning::Diag: return "diag";
    case Tuning::Full: return "full";
    case Tuning::Sqrt: return "sqrt";
  }
  return "unknown";
}

Tuning parse_tuning(const std::string& name) {
  if (name == "scalar" || name == "s") return Tuning::Scalar;
  if (name == "diag" || name == "d") return Tuning::Diag;
  if (name == "full" || name == "f") return Tuning::Full;
  if (name == "sqrt") return Tuning::Sqrt;
  throw std::invalid_argument("unknown tuning mode '" + name + "'");
}

std::string AlgorithmChoice::label() const {
  switch (kind) {
    case SamplerKind::Sgld: return "sgld";
    case SamplerKind::Sgd:
      switch (tuning) {
        case Tuning::Scalar: return "sgd";
        case Tuning::Diag: return "sgd-d";
        case Tuning::Full: return "sgd-f";
        case Tuning::Sqrt: return "sgd-sqrt";
      }
      break;
    case SamplerKind::Sgfs:
      switch (tuning) {
        case Tuning::Scalar: return "sgfs-s";
        case Tuning::Diag: return "sgfs-d";
        case Tuning::Full: return "sgfs-f";
        case Tuning::Sqrt: break;
      }
      break;
  }
  return "unknown";
}

AlgorithmChoice parse_algorithm(const std::string& token, Tuning fallback) {
  std::string name = token;
  std::optional<Tuning> mode;
  const auto sep = token.find_first_of(":-");
  if (sep != std::string::npos) {
    name = token.substr(0, sep);
    mode = parse_tuning(token.substr(sep + 1));
  }
  AlgorithmChoice choice;
  if (name == "sgd") {
    choice.kind = SamplerKind::Sgd;
  } else if (name == "sgld") {
    choice.kind = SamplerKind::Sgld;
    if (mode) throw std::invalid_argument("sgld takes no tuning mode");
    return choice;
  } else if (name == "sgfs") {
    choice.kind = SamplerKind::Sgfs;
  } else {
    throw std::invalid_argument("unknown algorithm '" + token + "'");
  }
  choice.tuning = mode.value_or(fallback);
  if (choice.kind == SamplerKind::Sgfs && choice.tuning == Tuning::Sqrt) {
    throw std::invalid_argument("sgfs has no sqrt tuning");
  }
  return choice;
}

std::vector<AlgorithmChoice> parse_algorithm_list(const std::string& list, Tuning fallback) {
  std::vector<AlgorithmChoice> out;
  std::stringstream ss(list);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(parse_algorithm(token, fallback));
  }
  if (out.empty()) throw std::invalid_argument("empty algorithm list");
  return out;
}

TuningResult tune(const NoiseProfile& profile, const AlgorithmChoice& choice, const TuningOptions& options) {
  const Matrix& a = profile.hessian;
  const Matrix& c = profile.noise_cov;
  const double n = static_cast<double>(profile.num_examples);
  const int s = options.minibatch;
  const Eigen::Index p = a.rows();
  if (s < 1 || s > profile.num_examples) throw std::invalid_argument("tune: minibatch must lie in 1..N");

  TuningResult out;
  out.minibatch = s;
  out.preconditioner = Matrix::Identity(p, p);
  Matrix guard_h = out.preconditioner;

  switch (choice.kind) {
    case SamplerKind::Sgd:
      if (choice.tuning == Tuning::Sqrt) {
        out.epsilon = optimal_sqrt_rate(c, s, n);
        out.preconditioner = sqrt_preconditioner(c).asDiagonal();
      } else {
        out.epsilon = optimal_scalar_rate(c, s, n);
        if (choice.tuning == Tuning::Diag) {
          out.preconditioner = optimal_diag_preconditioner(c, out.epsilon, s, n).asDiagonal();
        } else if (choice.tuning == Tuning::Full) {
          out.preconditioner = optimal_full_preconditioner(c, out.epsilon, s, n);
        }
      }
      guard_h = out.preconditioner;
      break;
    case SamplerKind::Sgld:
      if (!(options.sgld_epsilon > 0.0)) throw std::invalid_argument("tune: sgld epsilon must be > 0");
      out.epsilon = options.sgld_epsilon;
      guard_h = (0.5 * n) * Matrix::Identity(p, p);
      break;
    case SamplerKind::Sgfs: {
      out.epsilon = optimal_scalar_rate(c, s, n);
      const Matrix batch_noise = c / static_cast<double>(s);
      const double h_max = options.h_max.value_or(1.0 / (out.epsilon * spectral_radius(a)));
      const Matrix ee = sgfs_stability_noise(h_max, out.epsilon, batch_noise, n).asDiagonal();
      out.injected_noise = ee;
      if (choice.tuning == Tuning::Full) {
        out.preconditioner = sgfs_optimal_preconditioner(batch_noise, ee, out.epsilon, n);
      } else {
        const auto mode = choice.tuning == Tuning::Diag ? SgfsApproximation::Diagonal : SgfsApproximation::Scalar;
        out.preconditioner = sgfs_approx_preconditioner(batch_noise, ee, out.epsilon, n, mode).asDiagonal();
      }
      guard_h = out.preconditioner;
      break;
    }
  }
  out.requested_epsilon = out.epsilon;
  const GuardedStep guarded = guard_step_size(out.epsilon, guard_h, a, options.guard_radius);
  out.epsilon = guarded.epsilon;
  out.step_downgraded = guarded.downgraded;
  return out;
}

Matrix predicted_covariance(const NoiseProfile& profile, const AlgorithmChoice& choice, const TuningResult& tuned) {
  const Matrix& a = profile.hessian;
  const Matrix& c = profile.noise_cov;
  switch (choice.kind) {
    case SamplerKind::Sgd: return predicted_covariance_sgd(a, c, tuned.epsilon, tuned.minibatch, tuned.preconditioner);
    case SamplerKind::Sgld:
      return predicted_covariance_sgld(a, c, tuned.epsilon, tuned.minibatch,
                                       static_cast<double>(profile.num_examples));
    case SamplerKind::Sgfs: {
      const Matrix ee = tuned.injected_noise.value_or(Matrix::Zero(a.rows(), a.cols()));
      return predicted_covariance_sgfs(a, c / static_cast<double>(tuned.minibatch), ee, tuned.preconditioner,
                                       tuned.epsilon);
    }
  }
  throw std::logic_error("predicted_covariance: unknown sampler");
}

Chain run_tuned_chain(const ModelProblem& problem, const NoiseProfile& profile, const AlgorithmChoice& choice,
                      const TuningResult& tuned, const ChainOptions& options) {
  SamplerConfig config;
  config.epsilon = tuned.epsilon;
  config.minibatch = tuned.minibatch;
  config.burn_in = options.burn_in;
  config.n_samples = options.n_samples;
  config.thin = options.thin;
  config.seed = options.seed;
  switch (choice.kind) {
    case SamplerKind::Sgd:
      config.preconditioner = tuned.preconditioner;
      return run_constant_sgd(problem, profile.map_point, config);
    case SamplerKind::Sgld:
      return run_sgld(problem, profile.map_point, config);
    case SamplerKind::Sgfs:
      config.preconditioner = tuned.preconditioner;
      config.injected_noise = tuned.injected_noise;
      return run_sgfs(problem, profile.map_point, config);
  }
  throw std::logic_error("run_tuned_chain: unknown sampler");
}

GaussianApprox reference_posterior(const NoiseProfile& profile) {
  return {profile.map_point, inverse_pd(static_cast<double>(profile.num_examples) * profile.hessian)};
}

KlRow evaluate_algorithm(const ModelProblem& problem, const NoiseProfile& profile, const AlgorithmChoice& choice,
                         const TuningOptions& tuning, const ChainOptions& chain) {
  KlRow row;
  row.label = choice.label();
  row.kind = choice.kind;
  row.tuning = choice.tuning;
  row.tuned = tune(profile, choice, tuning);
  row.predicted = predicted_covariance(profile, choice, row.tuned);
  const double n = static_cast<double>(profile.num_examples);
  row.predicted_kl = kl_to_posterior(row.predicted, profile.hessian, n);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    row.empirical = empirical_moments(run_tuned_chain(problem, profile, choice, row.tuned, chain));
    row.covariance_error = relative_frobenius_error(row.empirical.covariance, row.predicted);
    row.empirical_kl = gaussian_kl(row.empirical, reference_posterior(profile));
  } catch (const DivergenceError& e) {
    row.status = std::string("diverged: ") + e.what();
    row.empirical_kl = nan;
    row.covariance_error = nan;
  } catch (const FactorizationError& e) {
    row.status = std::string("singular chain covariance: ") + e.what();
    row.empirical_kl = std::numeric_limits<double>::infinity();
  }
  return row;
}

std::vector<KlRow> kl_table(const ModelProblem& problem, const NoiseProfile& profile,
                            const std::vector<AlgorithmChoice>& choices, const TuningOptions& tuning,
                            const ChainOptions& chain) {
  std::vector<KlRow> rows;
  rows.reserve(choices.size());
  for (std::size_t i = 0; i < choices.size(); ++i) {
    ChainOptions per_row = chain;
    per_row.seed = derive_seed(chain.seed, i);
    rows.push_back(evaluate_algorithm(problem, profile, choices[i], tuning, per_row));
  }
  return rows;
}

}  // namespace constsgd
