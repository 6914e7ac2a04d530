#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "constsgd/data.hpp"
#include "constsgd/hyperopt.hpp"
#include "constsgd/pipeline.hpp"

namespace py = pybind11;
using namespace constsgd;

namespace {

Dataset make_dataset(const RowMatrix& features, const std::string& task, std::optional<Vector> targets,
                     std::optional<std::vector<int>> labels, std::optional<int> num_classes) {
  Dataset d;
  d.features = features;
  d.task = parse_task(task);
  if (d.task == TaskKind::Linear) {
    if (!targets) throw std::invalid_argument("linear datasets need targets");
    d.targets = *targets;
  } else {
    if (!labels) throw std::invalid_argument("classification datasets need labels (1-based)");
    d.labels = *labels;
    d.num_classes = num_classes.value_or(d.task == TaskKind::Logistic ? 2 : *std::max_element(labels->begin(), labels->end()));
  }
  d.validate();
  return d;
}

SamplerConfig sampler_config(double epsilon, int minibatch, std::optional<Matrix> preconditioner,
                             std::optional<Matrix> injected_noise, long n_samples, std::optional<long> burn_in,
                             long thin, std::uint64_t seed, double temperature) {
  SamplerConfig c;
  c.epsilon = epsilon;
  c.minibatch = minibatch;
  c.preconditioner = std::move(preconditioner);
  c.injected_noise = std::move(injected_noise);
  c.n_samples = n_samples;
  c.burn_in = burn_in;
  c.thin = thin;
  c.seed = seed;
  c.temperature = temperature;
  return c;
}

py::dict row_dict(const KlRow& r) {
  py::dict d;
  d["algorithm"] = r.label;
  d["epsilon"] = r.tuned.epsilon;
  d["step_downgraded"] = r.tuned.step_downgraded;
  d["predicted_kl"] = r.predicted_kl;
  d["empirical_kl"] = r.empirical_kl;
  d["covariance_error"] = r.covariance_error;
  d["predicted_covariance"] = r.predicted;
  d["empirical_mean"] = r.empirical.mean;
  d["empirical_covariance"] = r.empirical.covariance;
  d["status"] = r.status;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Constant-rate SGD as an approximate posterior sampler";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<StabilityError>(m, "StabilityError", base.ptr());
  py::register_exception<FactorizationError>(m, "FactorizationError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NormalizationError>(m, "NormalizationError", base.ptr());

  // linalg and stationary
  m.def("solve_lyapunov", &solve_lyapunov, py::arg("a"), py::arg("q"));
  m.def("kl_to_posterior", &kl_to_posterior, py::arg("sigma"), py::arg("a"), py::arg("n"));
  m.def("gaussian_kl",
        [](const Vector& mq, const Matrix& sq, const Vector& mp, const Matrix& sp) {
          return gaussian_kl({mq, sq}, {mp, sp});
        },
        py::arg("mean_q"), py::arg("cov_q"), py::arg("mean_p"), py::arg("cov_p"));
  m.def("predicted_covariance_sgd", &predicted_covariance_sgd, py::arg("a"), py::arg("noise_cov"), py::arg("eps"),
        py::arg("minibatch"), py::arg("preconditioner") = py::none());
  m.def("predicted_covariance_sgfs", &predicted_covariance_sgfs, py::arg("a"), py::arg("noise_cov"),
        py::arg("injected_noise"), py::arg("preconditioner"), py::arg("eps"));
  m.def("predicted_covariance_sgld", &predicted_covariance_sgld, py::arg("a"), py::arg("noise_cov"), py::arg("eps"),
        py::arg("minibatch"), py::arg("n"));
  m.def("optimal_scalar_rate", &optimal_scalar_rate, py::arg("noise_cov"), py::arg("minibatch"), py::arg("n"));
  m.def("optimal_full_preconditioner", &optimal_full_preconditioner, py::arg("noise_cov"), py::arg("eps"),
        py::arg("minibatch"), py::arg("n"));
  m.def("optimal_diag_preconditioner", &optimal_diag_preconditioner, py::arg("noise_cov"), py::arg("eps"),
        py::arg("minibatch"), py::arg("n"));
  m.def("optimal_sqrt_rate", &optimal_sqrt_rate, py::arg("noise_cov"), py::arg("minibatch"), py::arg("n"));
  m.def("sgfs_stability_noise", &sgfs_stability_noise, py::arg("h_max"), py::arg("eps"), py::arg("noise_cov"),
        py::arg("n"));

  // data and model
  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("features"), py::arg("task") = "linear", py::arg("targets") = py::none(),
           py::arg("labels") = py::none(), py::arg("num_classes") = py::none())
      .def_readonly("features", &Dataset::features)
      .def_readonly("targets", &Dataset::targets)
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("num_classes", &Dataset::num_classes)
      .def_property_readonly("task", [](const Dataset& d) { return std::string(to_string(d.task)); })
      .def_property_readonly("num_examples", &Dataset::num_examples)
      .def_property_readonly("num_features", &Dataset::num_features);

  m.def("load_csv",
        [](const std::filesystem::path& path, char delimiter, std::optional<std::string> target,
           const std::string& task, const std::string& normalization) {
          CsvOptions o;
          o.delimiter = delimiter;
          o.target_name = std::move(target);
          o.task = parse_task(task);
          return normalize(load_csv(path, o), parse_normalization(normalization));
        },
        py::arg("path"), py::arg("delimiter") = ',', py::arg("target") = py::none(), py::arg("task") = "linear",
        py::arg("normalization") = "none");
  m.def("make_synthetic",
        [](const std::string& task, Eigen::Index num_features, Eigen::Index num_examples, int num_classes,
           double lambda_gen, double feature_correlation, std::uint64_t seed) {
          SyntheticSpec s;
          s.task = parse_task(task);
          s.num_features = num_features;
          s.num_examples = num_examples;
          s.num_classes = num_classes;
          s.lambda_gen = lambda_gen;
          s.feature_correlation = feature_correlation;
          s.seed = seed;
          SyntheticProblem p = make_synthetic(s);
          return py::make_tuple(p.dataset, p.true_weights);
        },
        py::arg("task") = "linear", py::arg("num_features") = 3, py::arg("num_examples") = 1000,
        py::arg("num_classes") = 3, py::arg("lambda_gen") = 1.0, py::arg("feature_correlation") = 0.0,
        py::arg("seed") = 0);
  m.def("conjugate_linear_posterior",
        [](const Dataset& d, double lambda) {
          const GaussianApprox g = conjugate_linear_posterior(d, lambda);
          return py::make_tuple(g.mean, g.covariance);
        },
        py::arg("dataset"), py::arg("lambda_"));

  py::class_<ModelProblem>(m, "ModelProblem")
      .def(py::init([](const Dataset& d, double lambda) {
             return ModelProblem(std::make_shared<const Dataset>(d), lambda);
           }),
           py::arg("dataset"), py::arg("lambda_"))
      .def_property_readonly("lambda_", &ModelProblem::lambda)
      .def_property_readonly("num_params", &ModelProblem::num_params)
      .def_property_readonly("num_examples", &ModelProblem::num_examples)
      .def("loss", [](const ModelProblem& p, const Vector& t) { return full_loss(p, t); })
      .def("gradient", [](const ModelProblem& p, const Vector& t) { return full_gradient(p, t); })
      .def("hessian", [](const ModelProblem& p, const Vector& t) { return hessian(p, t); })
      .def("per_example_gradients", [](const ModelProblem& p, const Vector& t) { return per_example_gradients(p, t); })
      .def("fit_map", [](const ModelProblem& p, std::optional<Vector> t0) {
             return fit_map(p, t0.value_or(Vector::Zero(p.num_params())));
           },
           py::arg("theta0") = py::none());

  py::class_<NoiseProfile>(m, "NoiseProfile")
      .def_readonly("map_point", &NoiseProfile::map_point)
      .def_readonly("hessian", &NoiseProfile::hessian)
      .def_readonly("noise_cov", &NoiseProfile::noise_cov)
      .def_readonly("noise_factor", &NoiseProfile::noise_factor)
      .def_readonly("num_examples", &NoiseProfile::num_examples);
  m.def("profile_noise", [](const ModelProblem& p) { return profile_noise(p); }, py::arg("problem"));

  // samplers
  const auto chain_runner = [](auto run) {
    return [run](const ModelProblem& p, const Vector& theta0, double epsilon, int minibatch,
                 std::optional<Matrix> preconditioner, std::optional<Matrix> injected_noise, long n_samples,
                 std::optional<long> burn_in, long thin, std::uint64_t seed, double temperature) {
      const SamplerConfig c = sampler_config(epsilon, minibatch, std::move(preconditioner), std::move(injected_noise),
                                             n_samples, burn_in, thin, seed, temperature);
      py::gil_scoped_release release;
      return RowMatrix(run(p, theta0, c).iterates);
    };
  };
#define CONSTSGD_CHAIN_ARGS                                                                                       \
  py::arg("problem"), py::arg("theta0"), py::arg("epsilon"), py::arg("minibatch"),                               \
      py::arg("preconditioner") = py::none(), py::arg("injected_noise") = py::none(), py::arg("n_samples") = 1000, \
      py::arg("burn_in") = py::none(), py::arg("thin") = 1, py::arg("seed") = 0, py::arg("temperature") = 1.0
  m.def("run_constant_sgd",
        chain_runner([](const ModelProblem& p, const Vector& t, const SamplerConfig& c) {
          return run_constant_sgd(p, t, c);
        }),
        CONSTSGD_CHAIN_ARGS);
  m.def("run_sgld",
        chain_runner([](const ModelProblem& p, const Vector& t, const SamplerConfig& c) { return run_sgld(p, t, c); }),
        CONSTSGD_CHAIN_ARGS);
  m.def("run_sgfs",
        chain_runner([](const ModelProblem& p, const Vector& t, const SamplerConfig& c) { return run_sgfs(p, t, c); }),
        CONSTSGD_CHAIN_ARGS);
#undef CONSTSGD_CHAIN_ARGS

  // pipeline
  m.def("kl_table",
        [](const ModelProblem& p, const NoiseProfile& profile, const std::string& algorithms, int minibatch,
           long n_samples, std::uint64_t seed, double sgld_epsilon) {
          TuningOptions t;
          t.minibatch = minibatch;
          t.sgld_epsilon = sgld_epsilon;
          ChainOptions c;
          c.n_samples = n_samples;
          c.seed = seed;
          std::vector<KlRow> rows;
          {
            py::gil_scoped_release release;
            rows = kl_table(p, profile, parse_algorithm_list(algorithms), t, c);
          }
          py::list out;
          for (const KlRow& r : rows) out.append(row_dict(r));
          return out;
        },
        py::arg("problem"), py::arg("profile"), py::arg("algorithms") = "sgd,sgd-d,sgd-f,sgld,sgfs-d,sgfs-f",
        py::arg("minibatch") = 100, py::arg("n_samples") = 100000, py::arg("seed") = 0, py::arg("sgld_epsilon") = 1e-3);

  // hyperopt
  m.def("run_vem",
        [](const Dataset& train, std::optional<Dataset> validation, int minibatch, double lambda0, long update_period,
           long max_outer_iters, std::uint64_t seed) {
          VemConfig c;
          c.sgd.minibatch = minibatch;
          c.sgd.seed = seed;
          c.lambda0 = lambda0;
          c.lambda_update_period = update_period;
          c.max_outer_iters = max_outer_iters;
          VemResult r;
          {
            py::gil_scoped_release release;
            r = run_vem(train, validation ? &*validation : nullptr, c);
          }
          std::vector<double> lambdas, losses;
          for (const VemRecord& rec : r.trace.records) {
            lambdas.push_back(rec.lambda);
            losses.push_back(rec.validation_loss);
          }
          py::dict d;
          d["theta"] = r.theta;
          d["lambda_"] = r.lambda;
          d["trace_lambda"] = lambdas;
          d["trace_validation_loss"] = losses;
          return d;
        },
        py::arg("train"), py::arg("validation") = py::none(), py::arg("minibatch") = 10, py::arg("lambda0") = 1.0,
        py::arg("update_period") = 100, py::arg("max_outer_iters") = 200, py::arg("seed") = 0);
  m.def("lambda_grid_sweep",
        [](const Dataset& train, const Dataset& val, const std::vector<double>& lambdas) {
          std::vector<double> losses;
          for (const GridPoint& g : lambda_grid_sweep(train, val, lambdas)) losses.push_back(g.validation_loss);
          return losses;
        },
        py::arg("train"), py::arg("validation"), py::arg("lambdas"));
  m.def("validation_loss", &validation_loss, py::arg("dataset"), py::arg("theta"));
  m.def("train_val_split", &train_val_split, py::arg("dataset"), py::arg("fraction"), py::arg("seed"));
}
