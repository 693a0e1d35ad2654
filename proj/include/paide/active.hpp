#pragma once

#include "paide/data.hpp"
#include "paide/ensemble.hpp"
#include "paide/pne.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace paide {

/// Acquisition rule: Random, MC(K) or a pairwise-distance estimator.
struct Strategy {
  enum class Kind { Random, MC, PaiDE };

  Kind kind = Kind::Random;
  std::size_t mc_samples = 1000;
  Distance distance;

  static Strategy random() { return {}; }
  static Strategy mc(std::size_t samples) { return {Kind::MC, samples, {}}; }
  static Strategy paide(Distance d) { return {Kind::PaiDE, 0, d}; }
  /// "random", "mc", "kl", "bhatt" or "chernoff:<alpha>".
  static Strategy from_name(std::string_view name, std::size_t mc_samples = 1000);
  std::string name() const;
};

/// Per-candidate scores for the rows of `candidates`. Random scores come from
/// `seed` alone and never touch the predictor; MC candidate i samples with
/// seed derive_seed(seed, {i}). `std_err`, if given, receives MC standard
/// errors (zeros otherwise).
Eigen::VectorXd score_pool(const Strategy& strategy, const MixturePredictor& predictor,
                           const Eigen::MatrixXd& candidates, std::uint64_t seed,
                           Eigen::VectorXd* std_err = nullptr);

/// Indices of the `b` largest scores ordered by (score desc, index asc).
std::vector<std::size_t> select_batch(const Eigen::VectorXd& scores, std::size_t b);

/// MeanOverDims: sqrt(mean_i |yhat_i - y_i|^2 / d). SumOverDims drops the 1/d.
enum class RmseConvention { MeanOverDims, SumOverDims };

/// Point prediction is the mixture mean.
double rmse(const MixturePredictor& predictor, const Dataset& test,
            RmseConvention convention = RmseConvention::MeanOverDims);
double rmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& targets,
            RmseConvention convention = RmseConvention::MeanOverDims);
/// Mean mixture log-density of the test targets.
double log_likelihood(const MixturePredictor& predictor, const Dataset& test);

/// Where labeled data come from: a synthetic task or a CSV file.
struct DataSource {
  std::string name = "hetero";  // hetero | bimodal | csv
  TaskOptions options;
  std::filesystem::path csv;
  /// Optional held-out CSV; otherwise the test split is carved from `csv`.
  std::filesystem::path test_csv;
  Eigen::Index input_dim = 1;
  Eigen::Index output_dim = 1;

  bool synthetic() const { return name != "csv"; }
};

struct ActiveConfig {
  /// 0 selects 100 for one-dimensional inputs and 200 otherwise.
  std::size_t init_train_size = 0;
  std::size_t batch_size = 10;
  std::size_t num_batches = 100;
  std::size_t pool_size = 10000;
  std::size_t mc_pool_size = 1000;
  std::size_t test_size = 2000;
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> strategies{"random", "mc", "kl", "bhatt"};
  std::size_t mc_samples = 1000;
  PneConfig pne;
  /// Epochs for the first fit and for from-scratch refits; < 0 uses pne.epochs.
  int epochs_initial = -1;
  /// Warm-started epochs after each acquisition.
  int epochs_per_batch = 200;
  bool warm_start = true;
  RmseConvention rmse_convention = RmseConvention::MeanOverDims;
  bool record_loglik = true;
  int jobs = 1;

  std::size_t resolved_init_size(Eigen::Index input_dim) const;
  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

struct BatchRecord {
  std::uint64_t seed = 0;
  std::string strategy;
  std::size_t batch = 0;
  double rmse = 0.0;
  double loglik = 0.0;
  double score_seconds = 0.0;
  std::vector<std::size_t> acquired;
  bool failed = false;
};

struct ActiveHistory {
  std::vector<BatchRecord> rows;
  /// One message per failed (seed, strategy) run.
  std::vector<std::string> failures;

  void append(ActiveHistory other);
};

/// The fixed per-seed material shared by every strategy.
struct Experiment {
  Dataset initial;
  Dataset test;
  /// CSV sources only: the full table and the rows consumed by the splits.
  std::optional<Dataset> source;
  std::vector<bool> used;
};

Experiment prepare_experiment(const ActiveConfig& cfg, const DataSource& source, std::uint64_t seed);

/// One (seed, strategy) run: batch 0 is the initial fit, batches 1..N follow
/// acquisitions. A divergence marks that and all later rows failed (NaN).
ActiveHistory run_active_learning(const ActiveConfig& cfg, const Strategy& strategy, const DataSource& source,
                                  std::uint64_t seed);

/// Every seed x strategy in cfg, on up to cfg.jobs threads. Rows are ordered
/// by (seed, strategy) as listed in cfg regardless of scheduling.
ActiveHistory run_experiment(const ActiveConfig& cfg, const DataSource& source);

/// `seed,strategy,batch,rmse,loglik,score_seconds`.
void write_results_csv(const std::vector<BatchRecord>& rows, const std::filesystem::path& path);
std::vector<BatchRecord> read_results_csv(const std::filesystem::path& path);
/// `seed,strategy,batch,pool_index`, one row per acquired candidate.
void write_acquisitions_csv(const std::vector<BatchRecord>& rows, const std::filesystem::path& path);

}  // namespace paide
