#include "run_config.hpp"

#include <cstdio>
#include <set>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>

namespace cli {

namespace pt = boost::property_tree;

namespace {

const std::set<std::string> kKnownKeys = {
    "run.seed",           "run.out",
    "data.path",          "data.delimiter",         "data.target",           "data.target_index",
    "data.task",          "data.normalization",
    "synthetic.num_features", "synthetic.num_examples", "synthetic.num_classes", "synthetic.lambda_gen",
    "synthetic.noise_scale",  "synthetic.feature_correlation",
    "model.lambda",
    "sampler.minibatch",  "sampler.algorithms",     "sampler.tuning",        "sampler.n_samples",
    "sampler.burn_in",    "sampler.thin",           "sampler.sgld_epsilon",  "sampler.h_max",
    "sampler.guard_radius",
    "hyperopt.lambda0",   "hyperopt.moment_decay",  "hyperopt.update_period", "hyperopt.max_outer_iters",
    "hyperopt.validation_fraction", "hyperopt.grid", "hyperopt.grid_lo",     "hyperopt.grid_hi",
    "hyperopt.grid_points",
    "compare.projection_samples",
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::optional<T> get_optional(const pt::ptree& tree, const std::string& key) {
  const auto text = tree.get_optional<std::string>(key);
  if (!text || text->empty()) return std::nullopt;
  return tree.get<T>(key);
}

}  // namespace

char parse_delimiter(const std::string& text) {
  if (text == "comma" || text == ",") return ',';
  if (text == "semicolon" || text == ";") return ';';
  if (text == "tab" || text == "\\t" || text == "\t") return '\t';
  if (text == "space" || text == " ") return ' ';
  if (text.size() == 1) return text[0];
  throw std::invalid_argument("unrecognised delimiter '" + text + "'");
}

std::string delimiter_name(char delimiter) {
  switch (delimiter) {
    case ',': return "comma";
    case ';': return "semicolon";
    case '\t': return "tab";
    case ' ': return "space";
    default: return std::string(1, delimiter);
  }
}

void check_known_keys(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw std::invalid_argument("config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!kKnownKeys.count(full)) throw std::invalid_argument("unknown config key '" + full + "'");
    }
  }
}

pt::ptree read_config_file(const std::filesystem::path& path) {
  pt::ptree tree;
  pt::read_ini(path.string(), tree);
  check_known_keys(tree);
  return tree;
}

RunConfig RunConfig::from_ptree(const pt::ptree& tree) {
  check_known_keys(tree);
  RunConfig c;
  c.seed = tree.get<std::uint64_t>("run.seed", c.seed);
  c.out = tree.get<std::string>("run.out", c.out.string());

  c.path = tree.get<std::string>("data.path", "");
  c.delimiter = parse_delimiter(tree.get<std::string>("data.delimiter", ","));
  c.target = tree.get<std::string>("data.target", "");
  c.target_index = get_optional<std::size_t>(tree, "data.target_index");
  c.task = constsgd::parse_task(tree.get<std::string>("data.task", "linear"));
  c.normalization = constsgd::parse_normalization(tree.get<std::string>("data.normalization", "row"));

  c.num_features = tree.get<Eigen::Index>("synthetic.num_features", c.num_features);
  c.num_examples = tree.get<Eigen::Index>("synthetic.num_examples", c.num_examples);
  c.num_classes = tree.get<int>("synthetic.num_classes", c.num_classes);
  c.lambda_gen = tree.get<double>("synthetic.lambda_gen", c.lambda_gen);
  c.noise_scale = tree.get<double>("synthetic.noise_scale", c.noise_scale);
  c.feature_correlation = tree.get<double>("synthetic.feature_correlation", c.feature_correlation);

  c.lambda = tree.get<double>("model.lambda", c.lambda);

  c.minibatch = tree.get<int>("sampler.minibatch", c.minibatch);
  c.algorithms = tree.get<std::string>("sampler.algorithms", c.algorithms);
  c.tuning = constsgd::parse_tuning(tree.get<std::string>("sampler.tuning", "scalar"));
  c.n_samples = tree.get<long>("sampler.n_samples", c.n_samples);
  c.burn_in = get_optional<long>(tree, "sampler.burn_in");
  c.thin = tree.get<long>("sampler.thin", c.thin);
  c.sgld_epsilon = tree.get<double>("sampler.sgld_epsilon", c.sgld_epsilon);
  c.h_max = get_optional<double>(tree, "sampler.h_max");
  c.guard_radius = tree.get<double>("sampler.guard_radius", c.guard_radius);

  c.lambda0 = tree.get<double>("hyperopt.lambda0", c.lambda0);
  c.moment_decay = tree.get<double>("hyperopt.moment_decay", c.moment_decay);
  c.update_period = tree.get<long>("hyperopt.update_period", c.update_period);
  c.max_outer_iters = tree.get<long>("hyperopt.max_outer_iters", c.max_outer_iters);
  c.validation_fraction = tree.get<double>("hyperopt.validation_fraction", c.validation_fraction);
  c.grid = tree.get<bool>("hyperopt.grid", c.grid);
  c.grid_lo = tree.get<double>("hyperopt.grid_lo", c.grid_lo);
  c.grid_hi = tree.get<double>("hyperopt.grid_hi", c.grid_hi);
  c.grid_points = tree.get<int>("hyperopt.grid_points", c.grid_points);

  c.projection_samples = tree.get<long>("compare.projection_samples", c.projection_samples);

  parse_algorithm_list(c.algorithms, c.tuning);
  if (!(c.lambda > 0.0)) throw std::invalid_argument("model.lambda must be > 0");
  if (c.minibatch < 1) throw std::invalid_argument("sampler.minibatch must be >= 1");
  if (c.n_samples < 1 || c.thin < 1) throw std::invalid_argument("sampler.n_samples and sampler.thin must be >= 1");
  if (c.burn_in && *c.burn_in < 0) throw std::invalid_argument("sampler.burn_in must be >= 0");
  if (c.projection_samples < 0) throw std::invalid_argument("compare.projection_samples must be >= 0");
  if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0)) {
    throw std::invalid_argument("hyperopt.validation_fraction must lie in (0, 1)");
  }
  return c;
}

pt::ptree RunConfig::to_ptree() const {
  pt::ptree t;
  t.put("run.seed", std::to_string(seed));
  t.put("run.out", out.string());

  t.put("data.path", path.string());
  t.put("data.delimiter", delimiter_name(delimiter));
  t.put("data.target", target);
  t.put("data.target_index", target_index ? std::to_string(*target_index) : "");
  t.put("data.task", std::string(constsgd::to_string(task)));
  t.put("data.normalization", constsgd::to_string(normalization));

  t.put("synthetic.num_features", std::to_string(num_features));
  t.put("synthetic.num_examples", std::to_string(num_examples));
  t.put("synthetic.num_classes", std::to_string(num_classes));
  t.put("synthetic.lambda_gen", num(lambda_gen));
  t.put("synthetic.noise_scale", num(noise_scale));
  t.put("synthetic.feature_correlation", num(feature_correlation));

  t.put("model.lambda", num(lambda));

  t.put("sampler.minibatch", std::to_string(minibatch));
  t.put("sampler.algorithms", algorithms);
  t.put("sampler.tuning", constsgd::to_string(tuning));
  t.put("sampler.n_samples", std::to_string(n_samples));
  t.put("sampler.burn_in", burn_in ? std::to_string(*burn_in) : "");
  t.put("sampler.thin", std::to_string(thin));
  t.put("sampler.sgld_epsilon", num(sgld_epsilon));
  t.put("sampler.h_max", h_max ? num(*h_max) : "");
  t.put("sampler.guard_radius", num(guard_radius));

  t.put("hyperopt.lambda0", num(lambda0));
  t.put("hyperopt.moment_decay", num(moment_decay));
  t.put("hyperopt.update_period", std::to_string(update_period));
  t.put("hyperopt.max_outer_iters", std::to_string(max_outer_iters));
  t.put("hyperopt.validation_fraction", num(validation_fraction));
  t.put("hyperopt.grid", grid ? "true" : "false");
  t.put("hyperopt.grid_lo", num(grid_lo));
  t.put("hyperopt.grid_hi", num(grid_hi));
  t.put("hyperopt.grid_points", std::to_string(grid_points));

  t.put("compare.projection_samples", std::to_string(projection_samples));
  return t;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [section, body] : to_ptree()) {
    for (const auto& [key, value] : body) j[section][key] = value.data();
  }
  return j;
}

constsgd::SyntheticSpec RunConfig::synthetic_spec() const {
  constsgd::SyntheticSpec spec;
  spec.task = task;
  spec.num_features = num_features;
  spec.num_examples = num_examples;
  spec.num_classes = task == constsgd::TaskKind::Logistic ? 2 : num_classes;
  spec.lambda_gen = lambda_gen;
  spec.noise_scale = noise_scale;
  spec.feature_correlation = feature_correlation;
  spec.prior_lambda = lambda;
  spec.seed = seed;
  return spec;
}

constsgd::TuningOptions RunConfig::tuning_options() const {
  constsgd::TuningOptions t;
  t.minibatch = minibatch;
  t.sgld_epsilon = sgld_epsilon;
  t.h_max = h_max;
  t.guard_radius = guard_radius;
  return t;
}

constsgd::ChainOptions RunConfig::chain_options() const {
  constsgd::ChainOptions c;
  c.n_samples = n_samples;
  c.burn_in = burn_in;
  c.thin = thin;
  c.seed = seed;
  return c;
}

}  // namespace cli
