#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "constsgd/model.hpp"
#include "constsgd/stationary.hpp"

namespace constsgd {

/// Cells of a delimited text file, kept as strings until a Dataset is built.
struct RawTable {
  std::vector<std::string> columns;  // header names, or "c0", "c1", ... when there is no header
  std::vector<std::vector<std::string>> rows;
  char delimiter = ',';
  bool has_header = false;

  std::size_t num_rows() const { return rows.size(); }
  std::size_t num_columns() const { return columns.size(); }
  /// Index of a named column; throws std::out_of_range if absent.
  std::size_t column_index(const std::string& name) const;
};

/// Parses delimited text. Fields may be wrapped in double quotes. The first
/// line is a header when any of its cells is not a number. Throws FormatError
/// on ragged rows or empty input.
RawTable parse_table(std::istream& in, char delimiter = ',');
RawTable read_table(const std::filesystem::path& path, char delimiter = ',');

struct CsvOptions {
  char delimiter = ',';
  std::optional<std::string> target_name;  // wins over target_index
  std::optional<std::size_t> target_index; // default: last column
  TaskKind task = TaskKind::Linear;
};

/// Splits a table into features and target. Classification targets are mapped
/// to labels 1..K in ascending order of their numeric value. Any cell that is
/// not a finite number raises FormatError with its 1-based row and column
/// (data rows are counted from 1, after any header).
Dataset table_to_dataset(const RawTable& table, const CsvOptions& options);
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// Writes features then the target (or label) column, comma-delimited, with a
/// header x0,...,x{D-1},y and 17 significant digits.
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

/// Scales every example to unit Euclidean norm. Throws NormalizationError
/// naming the first all-zero row (0-based).
Dataset normalize_rows_unit_length(const Dataset& dataset);

/// Divides every feature column by its largest absolute value. Throws
/// NormalizationError naming the first all-zero column (0-based).
Dataset normalize_columns_max_abs(const Dataset& dataset);

enum class Normalization { None, RowUnitLength, ColumnMaxAbs };
Normalization parse_normalization(const std::string& name);
std::string to_string(Normalization mode);
Dataset normalize(const Dataset& dataset, Normalization mode);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Random permutation split with round(fraction * N) training examples.
/// Both sides must be non-empty.
SplitIndices split_indices(std::size_t n, double fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> train_val_split(const Dataset& dataset, double fraction, std::uint64_t seed);

struct SyntheticSpec {
  TaskKind task = TaskKind::Linear;
  Eigen::Index num_features = 3;  // D
  Eigen::Index num_examples = 1000;
  int num_classes = 3;            // softmax only
  double lambda_gen = 1.0;        // true weights ~ N(0, I / lambda_gen) unless given
  std::optional<Vector> true_weights;
  double noise_scale = 1.0;       // linear-regression observation noise sd
  double feature_correlation = 0.0;  // AR(1) correlation between neighbouring features
  double prior_lambda = 1.0;      // prior precision of the returned conjugate posterior
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticProblem {
  Dataset dataset;
  Vector true_weights;
  std::optional<GaussianApprox> posterior;  // linear regression only
};

/// Standard-normal features (optionally AR(1)-correlated) with targets drawn
/// from the task's likelihood at the true weights.
SyntheticProblem make_synthetic(const SyntheticSpec& spec);

/// N((X^T X + lambda I)^{-1} X^T y, (X^T X + lambda I)^{-1}), unit noise variance.
GaussianApprox conjugate_linear_posterior(const Dataset& dataset, double lambda);

}  // namespace constsgd
