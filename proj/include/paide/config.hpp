#pragma once

#include "paide/active.hpp"
#include "paide/bench.hpp"
#include "paide/pne.hpp"
#include "paide/stats.hpp"

#include "json.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace paide {

/// Malformed configuration; the message names the offending key path.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Every experiment knob. All JSON keys are optional; unknown keys are errors.
///
///   { "out_dir": "...",
///     "data":   { "source", "csv", "test_csv", "input_dim", "output_dim",
///                 "hetero_spread": "variance"|"std", "bimodal_lambda": "rate"|"scale" },
///     "pne":    { "hidden_layers", "member_count", "dropout_rate", "log_var_min",
///                 "log_var_max", "learning_rate", "beta1", "beta2", "epsilon",
///                 "epochs", "batch_size", "seed", "bootstrap", "standardize_targets" },
///     "active": { "init_train_size", "batch_size", "num_batches", "pool_size",
///                 "mc_pool_size", "test_size", "seeds", "strategies", "mc_samples",
///                 "epochs_initial", "epochs_per_batch", "warm_start",
///                 "rmse_convention": "mean"|"sum", "record_loglik", "jobs" },
///     "bench":  { "dims", "ensemble_sizes", "mc_samples", "inputs_per_cell",
///                 "repetitions", "seed", "threads", "estimators" },
///     "stats":  { "results", "env", "alpha", "family": "batch"|"all",
///                 "alternative": "two-sided"|"less"|"greater" } }
struct RunConfig {
  std::filesystem::path out_dir;
  DataSource data;
  ActiveConfig active;  // active.pne is the "pne" section
  BenchConfig bench;
  CompareOptions stats;
  /// Results CSV consumed by the stats command.
  std::filesystem::path stats_results;
};

nlohmann::json pne_config_to_json(const PneConfig& cfg);
/// `where` prefixes key names in error messages.
PneConfig pne_config_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays `j` on the defaults in `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Writes `resolved_config.json` into `dir`.
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace paide
