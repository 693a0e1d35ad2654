#pragma once

#include "paide/ensemble.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace paide {

struct BenchConfig {
  std::vector<Eigen::Index> dims{1, 2, 4, 8, 16, 32};
  std::vector<int> ensemble_sizes{2, 5, 10, 20};
  std::vector<std::size_t> mc_samples{1000, 5000};
  std::size_t inputs_per_cell = 1000;
  int repetitions = 3;
  std::uint64_t seed = 0;
  /// Extra rows timed with this many threads; 1 disables them.
  int threads = 1;
  /// Estimators timed per cell: any of "mc", "kl", "bhatt".
  std::vector<std::string> estimators{"mc", "kl", "bhatt"};

  void validate() const;
};

struct BenchRow {
  std::string estimator;
  Eigen::Index dim = 0;
  int ensemble_size = 0;
  std::size_t mc_samples = 0;  // 0 for pairwise estimators
  std::size_t inputs_scored = 0;
  double total_seconds = 0.0;  // median over repetitions
  double seconds_per_input = 0.0;
  int threads = 1;
  /// Pairwise distances evaluated per input (0 for MC).
  std::size_t distance_calls = 0;
};

/// Uniform mixtures with means ~ N(0, I) and variances ~ U(0.5, 2), drawn
/// from a stream keyed by (seed, dim, size) only.
std::vector<Mixtured> bench_mixtures(Eigen::Index dim, int size, std::size_t count, std::uint64_t seed);

/// Distance evaluations one input costs under `distance`.
std::size_t count_distance_calls(const Mixtured& mix, const Distance& distance);

std::vector<BenchRow> time_estimators(const BenchConfig& cfg);

/// Columns follow BenchRow field order.
void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path);

}  // namespace paide
