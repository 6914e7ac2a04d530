#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <boost/property_tree/ptree.hpp>

#include "constsgd/data.hpp"
#include "constsgd/pipeline.hpp"
#include "json.hpp"

namespace cli {

/// Everything one command needs. Loaded from an INI file with sections
/// [run], [data], [synthetic], [model], [sampler], [hyperopt], [compare];
/// command-line flags override file values.
struct RunConfig {
  // [run]
  std::uint64_t seed = 0;
  std::filesystem::path out = ".";

  // [data]  an empty path selects the synthetic generator
  std::filesystem::path path;
  char delimiter = ',';
  std::string target;  // column name; empty means target_index, else last column
  std::optional<std::size_t> target_index;
  constsgd::TaskKind task = constsgd::TaskKind::Linear;
  constsgd::Normalization normalization = constsgd::Normalization::RowUnitLength;

  // [synthetic]
  Eigen::Index num_features = 3;
  Eigen::Index num_examples = 1000;
  int num_classes = 3;
  double lambda_gen = 1.0;
  double noise_scale = 1.0;
  double feature_correlation = 0.0;

  // [model]
  double lambda = 1.0;

  // [sampler]
  int minibatch = 100;
  std::string algorithms = "sgd,sgd-d,sgd-f,sgld,sgfs-d,sgfs-f";
  constsgd::Tuning tuning = constsgd::Tuning::Scalar;
  long n_samples = 100000;
  std::optional<long> burn_in;
  long thin = 1;
  double sgld_epsilon = 1e-3;
  std::optional<double> h_max;
  double guard_radius = 1.0;

  // [hyperopt]
  double lambda0 = 1.0;
  double moment_decay = 0.999;
  long update_period = 100;
  long max_outer_iters = 200;
  double validation_fraction = 0.2;
  bool grid = false;
  double grid_lo = 1e-3;
  double grid_hi = 1e3;
  int grid_points = 20;

  // [compare]
  long projection_samples = 2000;

  static RunConfig from_ptree(const boost::property_tree::ptree& tree);
  boost::property_tree::ptree to_ptree() const;
  nlohmann::json to_json() const;

  constsgd::SyntheticSpec synthetic_spec() const;
  constsgd::TuningOptions tuning_options() const;
  constsgd::ChainOptions chain_options() const;
};

/// Reads an INI file; unknown sections or keys are rejected.
boost::property_tree::ptree read_config_file(const std::filesystem::path& path);

/// Throws std::invalid_argument naming the first key that is not part of RunConfig.
void check_known_keys(const boost::property_tree::ptree& tree);

char parse_delimiter(const std::string& text);
std::string delimiter_name(char delimiter);

}  // namespace cli
