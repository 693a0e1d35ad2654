#pragma once

#include "paide/data.hpp"
#include "paide/ensemble.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace paide {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct PneConfig {
  Eigen::Index input_dim = 1;
  Eigen::Index output_dim = 1;
  std::vector<Eigen::Index> hidden_layers{50, 50, 50};
  int member_count = 5;
  /// Probability of zeroing a hidden unit in each member's fixed mask; 0 disables masks.
  double dropout_rate = 0.0;
  double log_var_min = -10.0;
  double log_var_max = 10.0;
  AdamConfig adam;
  int epochs = 500;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool bootstrap = true;
  /// Targets are shifted and scaled to unit variance before the NLL.
  bool standardize_targets = true;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

/// Per-feature affine map (v - mean) / scale.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer identity(Eigen::Index dim);
  /// Population statistics over rows; zero spread maps to scale 1.
  static Standardizer fit(const Eigen::MatrixXd& rows);
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const;
};

/// One MLP. Layer l maps width[l] -> width[l+1]; the last layer is the head
/// whose 2d outputs are (mean, raw log-variance).
struct PneMember {
  std::vector<Eigen::MatrixXd> weights;  // out x in
  std::vector<Eigen::VectorXd> biases;
  /// Per hidden layer, entries 0 or 1 / (1 - rate); empty without dropout.
  std::vector<Eigen::VectorXd> masks;

  std::size_t layer_count() const { return weights.size(); }
  Eigen::Index parameter_count() const;
};

/// Same layout as a member's trainable parameters.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Head outputs for a batch, one column per input.
struct HeadOutput {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd log_var;  // clamped
};

struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(int member, int epoch);
  int member;
  int epoch;
};

/// Fresh member: He-uniform weights, zero biases, optional fixed masks.
PneMember init_member(const PneConfig& cfg, Rng& rng);

/// `x` holds standardized inputs in columns. Throws TrainingDiverged
/// (member and epoch -1) on non-finite activations.
HeadOutput forward_batch(const PneMember& member, const Eigen::MatrixXd& x, const PneConfig& cfg);
Gaussiand forward(const PneMember& member, const Eigen::VectorXd& x, const PneConfig& cfg);

/// Mean Gaussian NLL over the columns of (x, y) and, if `grad` is non-null,
/// its exact gradient. The clamp passes gradient only strictly inside its range.
double nll_and_gradients(const PneMember& member, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                         const PneConfig& cfg, Gradients* grad);

Eigen::VectorXd flatten(const PneMember& member);
Eigen::VectorXd flatten(const Gradients& grad);
void unflatten(PneMember& member, const Eigen::VectorXd& params);

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const PneMember& shape);
  void step(PneMember& member, const Gradients& grad, const AdamConfig& cfg);
  long steps() const { return t_; }

 private:
  Gradients m_, v_;
  long t_ = 0;
};

/// Anything that maps an input to a predictive mixture.
class MixturePredictor {
 public:
  virtual ~MixturePredictor() = default;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  /// Inputs in rows; one mixture per row.
  virtual std::vector<Mixtured> predict_many(const Eigen::MatrixXd& inputs) const = 0;
  Mixtured predict(const Eigen::VectorXd& x) const;
};

struct TrainReport {
  /// epoch_loss[member][epoch]: mean minibatch NLL in standardized units.
  std::vector<std::vector<double>> epoch_loss;
  /// Bootstrap row indices used by each member in this call.
  std::vector<std::vector<std::size_t>> resample;
};

class PneEnsemble : public MixturePredictor {
 public:
  explicit PneEnsemble(PneConfig cfg);

  const PneConfig& config() const { return cfg_; }
  std::size_t size() const { return members_.size(); }
  const PneMember& member(std::size_t j) const { return members_.at(j); }
  PneMember& member(std::size_t j) { return members_.at(j); }
  const Standardizer& input_stats() const { return input_stats_; }
  const Standardizer& target_stats() const { return target_stats_; }
  Eigen::Index input_dim() const override { return cfg_.input_dim; }
  Eigen::Index output_dim() const override { return cfg_.output_dim; }

  /// Refits standardization on `data`, then runs `epochs` (cfg.epochs if < 0)
  /// of Adam on a fresh bootstrap per member. Parameters and optimizer state
  /// carry over between calls; see reset().
  TrainReport train(const Dataset& data, int epochs = -1);
  /// Back to the initial parameters of a fresh ensemble with this seed.
  /// Later bootstraps still draw from new streams.
  void reset();

  Mixtured predict_mixture(const Eigen::VectorXd& x) const { return predict(x); }
  std::vector<Mixtured> predict_many(const Eigen::MatrixXd& inputs) const override;
  /// Mixture means for every row, without building mixtures.
  Eigen::MatrixXd predict_mean(const Eigen::MatrixXd& inputs) const;

  void save(const std::filesystem::path& path) const;
  static PneEnsemble load(const std::filesystem::path& path);

 private:
  PneConfig cfg_;
  std::vector<PneMember> members_;
  std::vector<AdamState> optimizers_;
  Standardizer input_stats_;
  Standardizer target_stats_;
  std::uint64_t train_calls_ = 0;
};

/// Same as PneEnsemble(cfg): independent per-member streams derived from cfg.seed.
PneEnsemble init_ensemble(const PneConfig& cfg);

}  // namespace paide
