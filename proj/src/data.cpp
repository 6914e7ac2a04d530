#include "constsgd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "constsgd/errors.hpp"

namespace constsgd {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(const std::string& cell) {
  const std::string t = trim(cell);
  if (t.empty()) return std::nullopt;
  const char* begin = t.data();
  if (*begin == '+') ++begin;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return value;
}

std::vector<std::string> split_line(const std::string& line, char delimiter, std::size_t row) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (quoted) throw FormatError("unterminated quote", row, cells.size() + 1);
  cells.push_back(trim(cell));
  return cells;
}

Dataset copy_with_features(const Dataset& dataset, RowMatrix features) {
  Dataset out = dataset;
  out.features = std::move(features);
  return out;
}

}  // namespace

std::size_t RawTable::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("no column named '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

RawTable parse_table(std::istream& in, char delimiter) {
  RawTable table;
  table.delimiter = delimiter;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_line(line, delimiter, line_no);
    if (first) {
      first = false;
      table.has_header = std::any_of(cells.begin(), cells.end(), [](const std::string& c) { return !parse_number(c); });
      if (table.has_header) {
        table.columns = std::move(cells);
        continue;
      }
      for (std::size_t j = 0; j < cells.size(); ++j) table.columns.push_back("c" + std::to_string(j));
    }
    if (cells.size() != table.columns.size()) {
      throw FormatError("expected " + std::to_string(table.columns.size()) + " fields, found " +
                            std::to_string(cells.size()),
                        table.rows.size() + 1, std::min(cells.size(), table.columns.size()) + 1);
    }
    table.rows.push_back(std::move(cells));
  }
  if (table.columns.empty()) throw FormatError("empty input", 1, 1);
  if (table.rows.empty()) throw FormatError("no data rows", 1, 1);
  return table;
}

RawTable read_table(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path.string() + "'");
  return parse_table(in, delimiter);
}

Dataset table_to_dataset(const RawTable& table, const CsvOptions& options) {
  const std::size_t cols = table.num_columns();
  if (cols < 2) throw std::invalid_argument("table needs at least one feature and one target column");
  std::size_t target = cols - 1;
  if (options.target_name) {
    target = table.column_index(*options.target_name);
  } else if (options.target_index) {
    target = *options.target_index;
    if (target >= cols) throw std::out_of_range("target column index out of range");
  }

  const auto n = static_cast<Eigen::Index>(table.num_rows());
  Dataset out;
  out.task = options.task;
  out.features.resize(n, static_cast<Eigen::Index>(cols - 1));
  Vector raw_target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    Eigen::Index f = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const std::optional<double> v = parse_number(row[j]);
      if (!v || !std::isfinite(*v)) {
        throw FormatError("non-numeric cell '" + row[j] + "'", static_cast<std::size_t>(i) + 1, j + 1);
      }
      if (j == target) {
        raw_target(i) = *v;
      } else {
        out.features(i, f++) = *v;
      }
    }
  }

  if (options.task == TaskKind::Linear) {
    out.targets = std::move(raw_target);
    out.num_classes = 1;
  } else {
    std::map<double, int> codes;
    for (Eigen::Index i = 0; i < n; ++i) codes.emplace(raw_target(i), 0);
    int next = 1;
    for (auto& [value, code] : codes) code = next++;
    out.num_classes = static_cast<int>(codes.size());
    if (options.task == TaskKind::Logistic && out.num_classes != 2) {
      throw std::invalid_argument("logistic target must take exactly two values, found " +
                                  std::to_string(out.num_classes));
    }
    out.labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) out.labels[static_cast<std::size_t>(i)] = codes.at(raw_target(i));
  }
  out.validate();
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  return table_to_dataset(read_table(path, options.delimiter), options);
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  for (Eigen::Index j = 0; j < dataset.num_features(); ++j) out << 'x' << j << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < dataset.num_examples(); ++i) {
    for (Eigen::Index j = 0; j < dataset.num_features(); ++j) out << dataset.features(i, j) << ',';
    if (dataset.task == TaskKind::Linear) {
      out << dataset.targets(i) << '\n';
    } else {
      out << dataset.labels[static_cast<std::size_t>(i)] << '\n';
    }
  }
}

Dataset normalize_rows_unit_length(const Dataset& dataset) {
  RowMatrix x = dataset.features;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm > 0.0)) throw NormalizationError("all-zero feature row", static_cast<std::size_t>(i));
    x.row(i) /= norm;
  }
  return copy_with_features(dataset, std::move(x));
}

Dataset normalize_columns_max_abs(const Dataset& dataset) {
  RowMatrix x = dataset.features;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double scale = x.col(j).cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) throw NormalizationError("all-zero feature column", static_cast<std::size_t>(j));
    x.col(j) /= scale;
  }
  return copy_with_features(dataset, std::move(x));
}

Normalization parse_normalization(const std::string& name) {
  if (name == "none") return Normalization::None;
  if (name == "row" || name == "rows" || name == "row-unit") return Normalization::RowUnitLength;
  if (name == "column" || name == "columns" || name == "column-max-abs") return Normalization::ColumnMaxAbs;
  throw std::invalid_argument("unknown normalization '" + name + "'");
}

std::string to_string(Normalization mode) {
  switch (mode) {
    case Normalization::None: return "none";
    case Normalization::RowUnitLength: return "row";
    case Normalization::ColumnMaxAbs: return "column";
  }
  return "unknown";
}

Dataset normalize(const Dataset& dataset, Normalization mode) {
  switch (mode) {
    case Normalization::RowUnitLength: return normalize_rows_unit_length(dataset);
    case Normalization::ColumnMaxAbs: return normalize_columns_max_abs(dataset);
    case Normalization::None: break;
  }
  return dataset;
}

SplitIndices split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split fraction must lie in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n) throw std::invalid_argument("split leaves an empty side");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

std::pair<Dataset, Dataset> train_val_split(const Dataset& dataset, double fraction, std::uint64_t seed) {
  const SplitIndices idx = split_indices(static_cast<std::size_t>(dataset.num_examples()), fraction, seed);
  return {dataset.subset(idx.train), dataset.subset(idx.validation)};
}

void SyntheticSpec::validate() const {
  if (num_features < 1 || num_examples < 1) throw std::invalid_argument("synthetic spec needs D >= 1 and N >= 1");
  if (task == TaskKind::Softmax && num_classes < 2) throw std::invalid_argument("softmax spec needs K >= 2");
  if (!(lambda_gen > 0.0) || !(prior_lambda > 0.0)) throw std::invalid_argument("synthetic spec: lambdas must be > 0");
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("synthetic spec: noise_scale must be >= 0");
  if (!(std::abs(feature_correlation) < 1.0)) throw std::invalid_argument("synthetic spec: |correlation| must be < 1");
  const Eigen::Index p = task == TaskKind::Softmax ? num_features * num_classes : num_features;
  if (true_weights && true_weights->size() != p) throw ShapeError("synthetic spec: true_weights has wrong length");
}

SyntheticProblem make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Eigen::Index n = spec.num_examples;
  const Eigen::Index d = spec.num_features;
  const int k = spec.task == TaskKind::Softmax ? spec.num_classes : (spec.task == TaskKind::Logistic ? 2 : 1);
  const Eigen::Index p = spec.task == TaskKind::Softmax ? d * k : d;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;

  SyntheticProblem out;
  if (spec.true_weights) {
    out.true_weights = *spec.true_weights;
  } else {
    out.true_weights.resize(p);
    const double sd = 1.0 / std::sqrt(spec.lambda_gen);
    for (Eigen::Index i = 0; i < p; ++i) out.true_weights(i) = sd * normal(rng);
  }

  Dataset& data = out.dataset;
  data.task = spec.task;
  data.num_classes = k;
  data.features.resize(n, d);
  const double rho = spec.feature_correlation;
  const double innovation = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.features(i, 0) = normal(rng);
    for (Eigen::Index j = 1; j < d; ++j) data.features(i, j) = rho * data.features(i, j - 1) + innovation * normal(rng);
  }

  const Vector& w = out.true_weights;
  switch (spec.task) {
    case TaskKind::Linear:
      data.targets = data.features * w;
      for (Eigen::Index i = 0; i < n; ++i) data.targets(i) += spec.noise_scale * normal(rng);
      out.posterior = conjugate_linear_posterior(data, spec.prior_lambda);
      break;
    case TaskKind::Logistic:
      data.labels.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        const double prob = 1.0 / (1.0 + std::exp(-data.features.row(i).dot(w)));
        data.labels[static_cast<std::size_t>(i)] = uniform(rng) < prob ? 2 : 1;
      }
      break;
    case TaskKind::Softmax: {
      data.labels.resize(static_cast<std::size_t>(n));
      Vector logits(k);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) logits(c) = data.features.row(i).dot(w.segment(c * d, d));
        const Vector probs = (logits.array() - logits.maxCoeff()).exp();
        double u = uniform(rng) * probs.sum();
        int label = k;
        for (int c = 0; c < k; ++c) {
          u -= probs(c);
          if (u < 0.0) {
            label = c + 1;
            break;
          }
        }
        data.labels[static_cast<std::size_t>(i)] = label;
      }
      break;
    }
  }
  data.validate();
  return out;
}

GaussianApprox conjugate_linear_posterior(const Dataset& dataset, double lambda) {
  if (dataset.task != TaskKind::Linear) throw std::invalid_argument("conjugate posterior needs a linear dataset");
  if (!(lambda > 0.0)) throw std::invalid_argument("conjugate posterior: lambda must be > 0");
  dataset.validate();
  const Eigen::Index d = dataset.num_features();
  Matrix precision = dataset.features.transpose() * dataset.features;
  precision.diagonal().array() += lambda;
  const Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) throw FactorizationError("conjugate posterior: precision not positive definite");
  GaussianApprox out;
  out.mean = llt.solve(dataset.features.transpose() * dataset.targets);
  out.covariance = symmetrize(llt.solve(Matrix::Identity(d, d)));
  return out;
}

}  // namespace constsgd
