#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>

#include "constsgd/hyperopt.hpp"

namespace cli {

using namespace constsgd;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

std::ofstream open_output(const RunConfig& config, const std::string& name) {
  std::filesystem::create_directories(config.out);
  std::ofstream out(config.out / name);
  if (!out) throw std::runtime_error("cannot write " + (config.out / name).string());
  return out;
}

// CSV outputs start with comment lines carrying the schema version and the
// full config, so `pandas.read_csv(..., comment='#')` reads them directly.
std::ofstream open_csv(const RunConfig& config, const std::string& name, const std::string& header) {
  std::ofstream out = open_output(config, name);
  out << "# schema_version: " << kSchemaVersion << '\n' << "# config: " << config.to_json().dump() << '\n';
  out << header << '\n';
  return out;
}

void write_json(const RunConfig& config, const std::string& name, json body) {
  body["schema_version"] = kSchemaVersion;
  body["config"] = config.to_json();
  open_output(config, name) << body.dump(2) << '\n';
}

void echo_config(const RunConfig& config) {
  std::filesystem::create_directories(config.out);
  boost::property_tree::write_ini((config.out / "config.ini").string(), config.to_ptree());
}

struct Prepared {
  ModelProblem problem;
  NoiseProfile profile;
};

Prepared prepare(const RunConfig& config) {
  auto data = std::make_shared<const Dataset>(load_dataset(config));
  ModelProblem problem(data, config.lambda);
  NoiseProfile profile = profile_noise(problem);
  std::cerr << "profiled " << to_string(config.task) << " model: N=" << profile.num_examples
            << " P=" << profile.map_point.size() << '\n';
  return {std::move(problem), std::move(profile)};
}

json row_to_json(const KlRow& row) {
  return {{"algorithm", row.label},
          {"sampler", to_string(row.kind)},
          {"tuning", row.kind == SamplerKind::Sgld ? "none" : to_string(row.tuning)},
          {"epsilon", row.tuned.epsilon},
          {"requested_epsilon", row.tuned.requested_epsilon},
          {"step_downgraded", row.tuned.step_downgraded},
          {"minibatch", row.tuned.minibatch},
          {"predicted_kl", row.predicted_kl},
          {"empirical_kl", row.empirical_kl},
          {"covariance_error", row.covariance_error},
          {"status", row.status}};
}

}  // namespace

Dataset load_dataset(const RunConfig& config) {
  if (config.path.empty()) return make_synthetic(config.synthetic_spec()).dataset;
  CsvOptions options;
  options.delimiter = config.delimiter;
  if (!config.target.empty()) options.target_name = config.target;
  options.target_index = config.target_index;
  options.task = config.task;
  return normalize(load_csv(config.path, options), config.normalization);
}

void cmd_fit(const RunConfig& config) {
  const Prepared p = prepare(config);
  const NoiseProfile& prof = p.profile;
  json body = {{"task", std::string(to_string(config.task))},
               {"lambda", config.lambda},
               {"num_examples", prof.num_examples},
               {"num_params", prof.map_point.size()},
               {"map_point", to_json(prof.map_point)},
               {"map_gradient_inf_norm", full_gradient(p.problem, prof.map_point).lpNorm<Eigen::Infinity>()},
               {"hessian", to_json(prof.hessian)},
               {"noise_cov", to_json(prof.noise_cov)},
               {"noise_factor", to_json(prof.noise_factor)},
               {"gradient_inf_norm", prof.gradient_inf_norm}};
  write_json(config, "noise_profile.json", std::move(body));
  echo_config(config);
}

void cmd_kl_table(const RunConfig& config) {
  const Prepared p = prepare(config);
  const auto choices = parse_algorithm_list(config.algorithms, config.tuning);
  const std::vector<KlRow> rows = kl_table(p.problem, p.profile, choices, config.tuning_options(),
                                           config.chain_options());

  std::ofstream csv = open_csv(config, "kl_table.csv",
                               "algorithm,sampler,tuning,epsilon,requested_epsilon,step_downgraded,minibatch,"
                               "predicted_kl,empirical_kl,covariance_error,status");
  json table = json::array();
  for (const KlRow& r : rows) {
    const json j = row_to_json(r);
    csv << r.label << ',' << j["sampler"].get<std::string>() << ',' << j["tuning"].get<std::string>() << ','
        << num(r.tuned.epsilon) << ',' << num(r.tuned.requested_epsilon) << ',' << (r.tuned.step_downgraded ? 1 : 0)
        << ',' << r.tuned.minibatch << ',' << num(r.predicted_kl) << ',' << num(r.empirical_kl) << ','
        << num(r.covariance_error) << ",\"" << r.status << "\"\n";
    table.push_back(j);
    std::cerr << r.label << ": predicted KL " << r.predicted_kl << ", empirical KL " << r.empirical_kl
              << (r.status == "ok" ? "" : " [" + r.status + "]") << '\n';
  }
  write_json(config, "kl_table.json", {{"rows", table}, {"num_examples", p.profile.num_examples}});
  echo_config(config);
}

void cmd_compare_covariance(const RunConfig& config) {
  const Prepared p = prepare(config);
  const auto choices = parse_algorithm_list(config.algorithms, config.tuning);
  const Eigen::Index dim = p.profile.map_point.size();

  // Principal axes of the reference posterior, eigenvalues ascending.
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(reference_posterior(p.profile).covariance);
  const Vector smallest = eig.eigenvectors().col(0);
  const Vector largest = eig.eigenvectors().col(dim - 1);

  std::ofstream csv = open_csv(config, "cov_compare.csv", "algorithm,row_type,i,j,predicted,empirical");
  std::ofstream proj = open_csv(config, "cov_projections.csv", "algorithm,sample,pc_largest,pc_smallest");
  const TuningOptions tuning = config.tuning_options();
  for (std::size_t r = 0; r < choices.size(); ++r) {
    const AlgorithmChoice& choice = choices[r];
    const TuningResult tuned = tune(p.profile, choice, tuning);
    const Matrix predicted = predicted_covariance(p.profile, choice, tuned);
    ChainOptions chain_options = config.chain_options();
    chain_options.seed = derive_seed(config.seed, r);
    Matrix empirical = Matrix::Constant(dim, dim, std::numeric_limits<double>::quiet_NaN());
    try {
      const Chain chain = run_tuned_chain(p.problem, p.profile, choice, tuned, chain_options);
      empirical = empirical_moments(chain).covariance;
      const long shown = std::min<long>(config.projection_samples, chain.iterates.rows());
      for (long s = 0; s < shown; ++s) {
        const Vector centred = chain.iterates.row(s).transpose() - p.profile.map_point;
        proj << choice.label() << ',' << s << ',' << num(largest.dot(centred)) << ','
             << num(smallest.dot(centred)) << '\n';
      }
      std::cerr << choice.label() << ": relative Frobenius error "
                << relative_frobenius_error(empirical, predicted) << '\n';
    } catch (const DivergenceError& e) {
      std::cerr << choice.label() << ": chain diverged: " << e.what() << '\n';
    }
    for (Eigen::Index i = 0; i < dim; ++i) {
      for (Eigen::Index j = i; j < dim; ++j) {
        csv << choice.label() << ",entry," << i << ',' << j << ',' << num(predicted(i, j)) << ','
            << num(empirical(i, j)) << '\n';
      }
    }
    csv << choice.label() << ",pc_largest," << dim - 1 << ',' << dim - 1 << ','
        << num(largest.dot(predicted * largest)) << ',' << num(largest.dot(empirical * largest)) << '\n';
    csv << choice.label() << ",pc_smallest,0,0," << num(smallest.dot(predicted * smallest)) << ','
        << num(smallest.dot(empirical * smallest)) << '\n';
  }
  echo_config(config);
}

void cmd_hyperopt(const RunConfig& config) {
  if (config.task != TaskKind::Softmax) throw std::invalid_argument("hyperopt needs task = softmax");
  const auto [train, val] = train_val_split(load_dataset(config), 1.0 - config.validation_fraction, config.seed);

  VemConfig vem;
  vem.sgd.minibatch = config.minibatch;
  vem.sgd.seed = config.seed;
  vem.lambda0 = config.lambda0;
  vem.moment_decay = config.moment_decay;
  vem.lambda_update_period = config.update_period;
  vem.max_outer_iters = config.max_outer_iters;
  const VemResult result = run_vem(train, &val, vem);

  std::ofstream trace = open_csv(config, "vem_trace.csv", "iteration,lambda,moment,epsilon,validation_loss");
  for (const VemRecord& r : result.trace.records) {
    trace << r.iteration << ',' << num(r.lambda) << ',' << num(r.moment) << ',' << num(r.epsilon) << ','
          << num(r.validation_loss) << '\n';
  }
  json body = {{"selected_lambda", result.lambda},
               {"validation_loss", validation_loss(val, result.theta)},
               {"num_train", train.num_examples()},
               {"num_validation", val.num_examples()}};
  std::cerr << "selected lambda " << result.lambda << '\n';

  if (config.grid) {
    const auto sweep = lambda_grid_sweep(train, val, log_grid(config.grid_lo, config.grid_hi, config.grid_points));
    std::ofstream grid = open_csv(config, "lambda_grid.csv", "lambda,validation_loss");
    json points = json::array();
    for (const GridPoint& g : sweep) {
      grid << num(g.lambda) << ',' << num(g.validation_loss) << '\n';
      points.push_back({{"lambda", g.lambda}, {"validation_loss", g.validation_loss}});
    }
    const auto best = std::min_element(sweep.begin(), sweep.end(), [](const GridPoint& a, const GridPoint& b) {
      return a.validation_loss < b.validation_loss;
    });
    body["grid"] = points;
    body["grid_best_lambda"] = best->lambda;
    body["grid_best_validation_loss"] = best->validation_loss;
    body["selected_map_validation_loss"] = lambda_grid_sweep(train, val, {result.lambda})[0].validation_loss;
  }
  write_json(config, "hyperopt.json", std::move(body));
  echo_config(config);
}

void cmd_synth(const RunConfig& config) {
  const SyntheticProblem synth = make_synthetic(config.synthetic_spec());
  std::filesystem::create_directories(config.out);
  write_csv(synth.dataset, config.out / "synthetic.csv");
  json body = {{"task", std::string(to_string(config.task))},
               {"num_examples", synth.dataset.num_examples()},
               {"num_features", synth.dataset.num_features()},
               {"true_weights", to_json(synth.true_weights)}};
  if (synth.posterior) {
    body["posterior_mean"] = to_json(synth.posterior->mean);
    body["posterior_covariance"] = to_json(synth.posterior->covariance);
  }
  write_json(config, "synthetic.json", std::move(body));
  echo_config(config);
}

}  // namespace cli
