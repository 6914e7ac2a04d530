#include <functional>
#include <iostream>
#include <map>

#include <boost/property_tree/ptree.hpp>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kOptimization = 2, kDegenerate = 3 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, algorithms, tuning, data, task, delimiter, target, normalization;
  std::optional<int> minibatch;
  std::optional<double> lambda;
  std::optional<long> samples;
  bool grid = false;
};

boost::property_tree::ptree merged_tree(const Flags& f) {
  boost::property_tree::ptree tree;
  if (!f.config.empty()) tree = cli::read_config_file(f.config);
  const auto put = [&](const char* key, const auto& value) {
    if (value) tree.put(key, *value);
  };
  put("run.seed", f.seed);
  put("run.out", f.out);
  put("data.path", f.data);
  put("data.task", f.task);
  put("data.delimiter", f.delimiter);
  put("data.target", f.target);
  put("data.normalization", f.normalization);
  put("model.lambda", f.lambda);
  put("sampler.minibatch", f.minibatch);
  put("sampler.algorithms", f.algorithms);
  put("sampler.tuning", f.tuning);
  put("sampler.n_samples", f.samples);
  if (f.grid) tree.put("hyperopt.grid", "true");
  return tree;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constsgd: constant-rate SGD as an approximate posterior sampler"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  app.add_option("--config", f.config, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Master seed");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--algorithms", f.algorithms, "Comma list, e.g. sgd,sgd-d,sgd-f,sgld,sgfs-d,sgfs-f");
  app.add_option("--tuning", f.tuning, "Default tuning for bare sgd/sgfs")
      ->check(CLI::IsMember({"scalar", "diag", "full", "sqrt"}));
  app.add_option("--s", f.minibatch, "Minibatch size S");
  app.add_option("--lambda", f.lambda, "Prior precision");
  app.add_option("--samples", f.samples, "Recorded samples per chain");
  app.add_option("--data", f.data, "CSV file; omit for synthetic data");
  app.add_option("--task", f.task, "linear | logistic | softmax");
  app.add_option("--delimiter", f.delimiter, "CSV delimiter (comma, semicolon, tab or a character)");
  app.add_option("--target", f.target, "Target column name");
  app.add_option("--normalization", f.normalization, "row | column | none");

  const std::map<std::string, std::function<void(const cli::RunConfig&)>> commands = {
      {"fit", cli::cmd_fit},
      {"kl-table", cli::cmd_kl_table},
      {"compare-cov", cli::cmd_compare_covariance},
      {"hyperopt", cli::cmd_hyperopt},
      {"synth", cli::cmd_synth},
  };
  app.add_subcommand("fit", "Fit the MAP point and write noise_profile.json");
  app.add_subcommand("kl-table", "Tune, sample and score each algorithm; write kl_table.csv/json");
  app.add_subcommand("compare-cov", "Predicted vs empirical covariance entries; write cov_compare.csv");
  app.add_subcommand("hyperopt", "Variational EM for the prior precision; write vem_trace.csv")
      ->add_flag("--grid", f.grid, "Also sweep a log-spaced lambda grid");
  app.add_subcommand("synth", "Write a synthetic dataset to synthetic.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  cli::RunConfig config;
  try {
    config = cli::RunConfig::from_ptree(merged_tree(f));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    commands.at(name)(config);
  } catch (const constsgd::ConvergenceError& e) {
    std::cerr << "optimization failed: " << e.what() << '\n';
    return kOptimization;
  } catch (const constsgd::DivergenceError& e) {
    std::cerr << "optimization failed: " << e.what() << '\n';
    return kOptimization;
  } catch (const constsgd::DegenerateError& e) {
    std::cerr << "degenerate: " << e.what() << '\n';
    return kDegenerate;
  } catch (const constsgd::StabilityError& e) {
    std::cerr << "degenerate: " << e.what() << '\n';
    return kDegenerate;
  } catch (const constsgd::FactorizationError& e) {
    std::cerr << "degenerate: " << e.what() << '\n';
    return kDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
