#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "constsgd/model.hpp"
#include "constsgd/sampler.hpp"

namespace constsgd {

/// Negative log-joint of softmax regression with a N(0, I / lambda) prior:
/// (lambda/2)|theta|^2 - (DK/2) log lambda + (DK/2) log 2pi
///   + sum_n [logsumexp_k(x_n^T theta_k) - x_n^T theta_{y_n}].
double softmax_log_joint(const Dataset& dataset, const Vector& theta, double lambda);

/// d/dlambda of softmax_log_joint: |theta|^2 / 2 - DK / (2 lambda).
double softmax_log_joint_lambda_derivative(const Vector& theta, double lambda);

/// lambda = DK / E_q[|theta|^2], the maximizer of -(lambda/2) m + (DK/2) log lambda.
/// Throws DegenerateError when the moment is not positive or lambda overflows.
double lambda_m_step(double moment, Eigen::Index num_features, int num_classes);

/// Mean negative log-likelihood over the examples, no prior terms.
/// Throws std::invalid_argument on an empty dataset.
double validation_loss(const Dataset& dataset, const Vector& theta);

struct VemConfig {
  SamplerConfig sgd;  // minibatch and seed are used; epsilon <= 0 means tune it
  double lambda0 = 1.0;
  double moment_decay = 0.999;
  long lambda_update_period = 100;
  long max_outer_iters = 200;  // number of lambda updates
  bool retune_step = true;     // rerun the scalar-rate rule when lambda moves by more than 2x
  FitOptions fit;              // MAP fit used to initialize theta
  std::function<void(Vector&)> post_step;  // applied to theta after every SGD step; for tests

  void validate() const;
};

struct VemRecord {
  long iteration = 0;
  double lambda = 0.0;
  double moment = 0.0;           // running E_q[|theta|^2]
  double epsilon = 0.0;          // step size in force after this update
  double validation_loss = 0.0;  // NaN without a validation set
};

struct VemTrace {
  std::vector<VemRecord> records;
};

struct VemResult {
  Vector theta;
  double lambda = 0.0;
  VemTrace trace;
};

/// Alternates constant-SGD steps on the softmax negative log-joint at the
/// current lambda with closed-form lambda updates from a bias-corrected
/// exponential moving average of |theta|^2 over the iterates.
///
/// Throws DivergenceError if the chain blows up and DegenerateError if the
/// moment collapses to zero.
VemResult run_vem(const Dataset& train, const Dataset* validation, const VemConfig& config);

struct GridPoint {
  double lambda = 0.0;
  double validation_loss = 0.0;
  Vector theta;  // MAP at this lambda
};

/// n log-spaced values from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int n);

/// MAP fit on train at every lambda, scored by validation_loss. Each fit is
/// warm-started from the previous grid point.
std::vector<GridPoint> lambda_grid_sweep(const Dataset& train, const Dataset& validation,
                                         const std::vector<double>& lambdas, const FitOptions& fit = {});

}  // namespace constsgd
