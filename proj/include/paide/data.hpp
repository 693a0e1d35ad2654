#pragma once

#include "paide/random.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace paide {

/// Labeled regression data, one point per row.
struct Dataset {
  Eigen::MatrixXd inputs;   // N x n
  Eigen::MatrixXd targets;  // N x d
  std::string name;

  std::size_t rows() const { return static_cast<std::size_t>(inputs.rows()); }
  Eigen::Index input_dim() const { return inputs.cols(); }
  Eigen::Index output_dim() const { return targets.cols(); }

  /// Throws std::invalid_argument on unequal row counts or non-finite entries.
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
  void append(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
};

/// How the second parameter of N(mu, s) in the hetero generator is read.
enum class SpreadParam { Variance, StdDev };
/// How lambda of the bimodal exponential input distribution is read.
enum class ExponentialParam { Rate, Scale };

struct TaskOptions {
  SpreadParam hetero_spread = SpreadParam::Variance;
  ExponentialParam bimodal_lambda = ExponentialParam::Rate;
};

/// The two 1D synthetic benchmarks, split into the input marginal and the
/// conditional label draw so pools can label on acquisition.
///
///  hetero:  c ~ U{0,1,2}, x ~ N({-4, 0, 4}[c], {2/5, 9/10, 2/5}[c]),
///           y = 7 sin x + 3 z |cos(x / 2)|
///  bimodal: x ~ Exp(lambda = 2), n ~ Bernoulli(1/2),
///           y = 10 sin x + z            (n = 0)
///           y = 10 cos x + z + 20 - x   (n = 1)
/// with z ~ N(0, 1).
class SyntheticTask {
 public:
  enum class Kind { Hetero, Bimodal };

  explicit SyntheticTask(Kind kind, TaskOptions options = {}) : kind_(kind), options_(options) {}
  static SyntheticTask from_name(std::string_view name, TaskOptions options = {});

  Kind kind() const { return kind_; }
  const TaskOptions& options() const { return options_; }
  std::string name() const { return kind_ == Kind::Hetero ? "hetero" : "bimodal"; }

  double sample_input(Rng& rng) const;
  double label(double x, Rng& rng) const;
  /// Per point: input draw followed by its label draw.
  Dataset generate(std::size_t n_points, Rng& rng) const;

 private:
  Kind kind_;
  TaskOptions options_;
};

Dataset gen_hetero(std::size_t n_points, Rng& rng, TaskOptions options = {});
Dataset gen_bimodal(std::size_t n_points, Rng& rng, TaskOptions options = {});

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads `x0..x{n-1},y0..y{d-1}` CSV. Throws CsvError naming the offending
/// line and column.
Dataset load_csv(const std::filesystem::path& path, Eigen::Index input_dim, Eigen::Index output_dim);
/// Reads only the x columns of a CSV (any y columns are ignored).
Eigen::MatrixXd load_inputs_csv(const std::filesystem::path& path, Eigen::Index input_dim);
/// Writes the same schema with 17 significant digits.
void write_csv(const Dataset& data, const std::filesystem::path& path);
std::string format_real(double v);

/// Unlabeled candidates whose labels are revealed one at a time.
class Pool {
 public:
  using Labeler = std::function<Eigen::VectorXd(std::size_t)>;

  Pool(Eigen::MatrixXd candidates, Labeler labeler, std::vector<std::size_t> source_rows = {});

  std::size_t size() const { return static_cast<std::size_t>(candidates_.rows()); }
  const Eigen::MatrixXd& candidates() const { return candidates_; }
  Eigen::VectorXd candidate(std::size_t i) const { return candidates_.row(static_cast<Eigen::Index>(i)).transpose(); }
  bool acquired(std::size_t i) const { return acquired_.at(i); }
  /// Row of the source dataset behind candidate i (dataset pools only).
  std::size_t source_row(std::size_t i) const { return source_rows_.at(i); }
  bool has_source_rows() const { return !source_rows_.empty(); }

  /// Reveals the label of candidate i. Throws std::logic_error on a repeat.
  Eigen::VectorXd acquire(std::size_t i);

 private:
  Eigen::MatrixXd candidates_;
  Labeler labeler_;
  std::vector<std::size_t> source_rows_;
  std::vector<bool> acquired_;
};

/// Fresh inputs from the task's input marginal, labeled on acquisition.
Pool make_pool(const SyntheticTask& task, std::size_t size, Rng& rng);

/// Rows sampled without replacement from `source`, skipping rows flagged in
/// `used` (may be empty). Throws std::runtime_error on pool exhaustion.
Pool make_pool(const Dataset& source, std::size_t size, Rng& rng, const std::vector<bool>& used = {});

}  // namespace paide
