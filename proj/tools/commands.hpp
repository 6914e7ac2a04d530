#pragma once

#include "run_config.hpp"

namespace cli {

inline constexpr int kSchemaVersion = 1;

// Each command writes its outputs under config.out and returns normally on
// success; library exceptions propagate to main, which maps them to exit codes.
void cmd_fit(const RunConfig& config);
void cmd_kl_table(const RunConfig& config);
void cmd_compare_covariance(const RunConfig& config);
void cmd_hyperopt(const RunConfig& config);
void cmd_synth(const RunConfig& config);

/// The dataset a config points at: a CSV file (normalized as configured) or
/// a synthetic draw. Synthetic data is never normalized.
constsgd::Dataset load_dataset(const RunConfig& config);

}  // namespace cli
