#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "constsgd/model.hpp"
#include "constsgd/sampler.hpp"
#include "constsgd/stationary.hpp"

namespace constsgd {

enum class SamplerKind { Sgd, Sgld, Sgfs };
enum class Tuning { Scalar, Diag, Full, Sqrt };

std::string to_string(SamplerKind kind);
std::string to_string(Tuning tuning);
Tuning parse_tuning(const std::string& name);

/// One row of a comparison: which sampler and how it is tuned.
struct AlgorithmChoice {
  SamplerKind kind = SamplerKind::Sgd;
  Tuning tuning = Tuning::Scalar;

  /// "sgd", "sgd-d", "sgd-f", "sgd-sqrt", "sgld", "sgfs-s", "sgfs-d", "sgfs-f".
  std::string label() const;
};

/// Accepts a label as produced by AlgorithmChoice::label, "name:mode", or a
/// bare sampler name that takes `fallback` as its tuning. SGLD has no tuning
/// modes; SGFS supports scalar, diag and full.
AlgorithmChoice parse_algorithm(const std::string& token, Tuning fallback = Tuning::Scalar);
std::vector<AlgorithmChoice> parse_algorithm_list(const std::string& list, Tuning fallback = Tuning::Scalar);

struct TuningOptions {
  int minibatch = 1;
  double sgld_epsilon = 1e-3;
  std::optional<double> h_max;  // SGFS stability bound; default 1 / (eps * lambda_max(A))
  double guard_radius = 1.0;    // spectral radius targeted when a step is downgraded
};

/// Tuning per family, all at minibatch S:
///   SGD scalar  eps from the scalar-rate rule, H = I
///   SGD diag    same eps, diagonal H from the per-coordinate rule
///   SGD full    same eps, H = (2S / eps N) C^{-1}
///   SGD sqrt    eps from the sqrt-preconditioned rule, H = diag(C)^{-1/2}
///   SGLD        eps = sgld_epsilon
///   SGFS        eps from the scalar-rate rule, diagonal stability noise from
///               C / S, then the scalar, diagonal or full Fisher-scoring H
/// followed by the discrete stability guard on eps H A (SGLD: eps N A / 2).
TuningResult tune(const NoiseProfile& profile, const AlgorithmChoice& choice, const TuningOptions& options);

/// Stationary covariance predicted by the OU limit for a tuned sampler.
Matrix predicted_covariance(const NoiseProfile& profile, const AlgorithmChoice& choice, const TuningResult& tuned);

struct ChainOptions {
  long n_samples = 100000;
  std::optional<long> burn_in;
  long thin = 1;
  std::uint64_t seed = 0;
};

/// Runs the sampler for a tuned choice, starting at the MAP point.
Chain run_tuned_chain(const ModelProblem& problem, const NoiseProfile& profile, const AlgorithmChoice& choice,
                      const TuningResult& tuned, const ChainOptions& options);

struct KlRow {
  std::string label;
  SamplerKind kind = SamplerKind::Sgd;
  Tuning tuning = Tuning::Scalar;
  TuningResult tuned;
  double predicted_kl = 0.0;
  double empirical_kl = 0.0;        // NaN if the chain failed
  double covariance_error = 0.0;    // relative Frobenius error, empirical vs predicted
  Matrix predicted;
  GaussianApprox empirical;
  std::string status = "ok";
};

/// Reference posterior N(theta*, (N A)^{-1}).
GaussianApprox reference_posterior(const NoiseProfile& profile);

/// Tune, predict, sample and score one choice. Chain failures are reported in
/// the row's status rather than thrown.
KlRow evaluate_algorithm(const ModelProblem& problem, const NoiseProfile& profile, const AlgorithmChoice& choice,
                         const TuningOptions& tuning, const ChainOptions& chain);

/// evaluate_algorithm for every choice; row i uses seed derive_seed(chain.seed, i).
std::vector<KlRow> kl_table(const ModelProblem& problem, const NoiseProfile& profile,
                            const std::vector<AlgorithmChoice>& choices, const TuningOptions& tuning,
                            const ChainOptions& chain);

}  // namespace constsgd
