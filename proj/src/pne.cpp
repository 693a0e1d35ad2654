#include "paide/pne.hpp"

#include "paide/config.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace paide {

namespace {

// Sub-stream tags for derive_seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kTrainStream = 2;

std::vector<Eigen::Index> layer_widths(const PneConfig& cfg) {
  std::vector<Eigen::Index> w{cfg.input_dim};
  w.insert(w.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
  w.push_back(2 * cfg.output_dim);
  return w;
}

struct Cache {
  std::vector<Eigen::MatrixXd> pre;   // hidden pre-activations
  std::vector<Eigen::MatrixXd> act;   // act[0] = input, act[l] = output of hidden layer l
};

/// Raw head outputs (2d x B) before the clamp.
Eigen::MatrixXd run(const PneMember& m, const Eigen::MatrixXd& x, Cache* cache) {
  Eigen::MatrixXd a = x;
  const std::size_t hidden = m.layer_count() - 1;
  if (cache) {
    cache->pre.clear();
    cache->act.assign(1, x);
  }
  for (std::size_t l = 0; l < hidden; ++l) {
    Eigen::MatrixXd z = m.weights[l] * a;
    z.colwise() += m.biases[l];
    a = z.cwiseMax(0.0);
    if (!m.masks.empty()) a.array().colwise() *= m.masks[l].array();
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->act.push_back(a);
    }
  }
  Eigen::MatrixXd out = m.weights[hidden] * a;
  out.colwise() += m.biases[hidden];
  return out;
}

Gradients zeros_like(const PneMember& m) {
  Gradients g;
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
  }
  return g;
}

}  // namespace

void PneConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("pne config: " + what); };
  if (input_dim < 1) fail("input_dim must be at least 1");
  if (output_dim < 1) fail("output_dim must be at least 1");
  for (const auto w : hidden_layers) {
    if (w < 1) fail("hidden layer widths must be at least 1");
  }
  if (member_count < 1) fail("member_count must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
  if (!(log_var_min < log_var_max)) fail("log_var_min must be below log_var_max");
  if (!(adam.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) fail("epsilon must be positive");
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 1) fail("batch_size must be at least 1");
}

Standardizer Standardizer::identity(Eigen::Index dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw std::invalid_argument("cannot standardize an empty set");
  Standardizer s;
  s.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
  s.scale = (centered.colwise().squaredNorm() / static_cast<double>(rows.rows())).cwiseSqrt().transpose();
  for (Eigen::Index k = 0; k < s.scale.size(); ++k) {
    if (!(s.scale[k] > 0.0)) s.scale[k] = 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& rows) const {
  return (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Eigen::Index PneMember::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

TrainingDiverged::TrainingDiverged(int member_, int epoch_)
    : std::runtime_error("training diverged (member " + std::to_string(member_) + ", epoch " +
                         std::to_string(epoch_) + ")"),
      member(member_),
      epoch(epoch_) {}

PneMember init_member(const PneConfig& cfg, Rng& rng) {
  const auto widths = layer_widths(cfg);
  PneMember m;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(widths[l]));
    std::uniform_real_distribution<double> u(-limit, limit);
    Eigen::MatrixXd w(widths[l + 1], widths[l]);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(widths[l + 1]));
  }
  if (cfg.dropout_rate > 0.0) {
    std::bernoulli_distribution keep(1.0 - cfg.dropout_rate);
    const double scale = 1.0 / (1.0 - cfg.dropout_rate);
    for (std::size_t l = 1; l + 1 < widths.size(); ++l) {
      Eigen::VectorXd mask(widths[l]);
      for (Eigen::Index i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? scale : 0.0;
      m.masks.push_back(std::move(mask));
    }
  }
  return m;
}

HeadOutput forward_batch(const PneMember& member, const Eigen::MatrixXd& x, const PneConfig& cfg) {
  if (x.rows() != cfg.input_dim) throw std::invalid_argument("forward: input dimension mismatch");
  const Eigen::MatrixXd raw = run(member, x, nullptr);
  if (!raw.allFinite()) throw TrainingDiverged(-1, -1);
  const Eigen::Index d = cfg.output_dim;
  return {raw.topRows(d), raw.bottomRows(d).cwiseMax(cfg.log_var_min).cwiseMin(cfg.log_var_max)};
}

Gaussiand forward(const PneMember& member, const Eigen::VectorXd& x, const PneConfig& cfg) {
  const HeadOutput out = forward_batch(member, x, cfg);
  return Gaussiand::diagonal(out.mean.col(0), out.log_var.col(0).array().exp().matrix());
}

double nll_and_gradients(const PneMember& member, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                         const PneConfig& cfg, Gradients* grad) {
  if (x.cols() == 0) throw std::invalid_argument("nll: empty batch");
  if (x.cols() != y.cols() || y.rows() != cfg.output_dim || x.rows() != cfg.input_dim) {
    throw std::invalid_argument("nll: dimension mismatch");
  }
  Cache cache;
  const Eigen::MatrixXd raw = run(member, x, grad ? &cache : nullptr);
  const Eigen::Index d = cfg.output_dim;
  const double n = static_cast<double>(x.cols());
  const Eigen::ArrayXXd raw_lv = raw.bottomRows(d).array();
  const Eigen::ArrayXXd log_var = raw_lv.max(cfg.log_var_min).min(cfg.log_var_max);
  const Eigen::ArrayXXd resid = y.array() - raw.topRows(d).array();
  const Eigen::ArrayXXd precision = (-log_var).exp();
  const double loss =
      0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) * n + log_var.sum() +
             (resid.square() * precision).sum()) /
      n;
  if (!std::isfinite(loss)) throw TrainingDiverged(-1, -1);
  if (!grad) return loss;

  if (grad->weights.size() != member.layer_count()) *grad = zeros_like(member);
  Eigen::MatrixXd delta(2 * d, x.cols());
  delta.topRows(d) = (-resid * precision / n).matrix();
  const Eigen::ArrayXXd inside = ((raw_lv > cfg.log_var_min) && (raw_lv < cfg.log_var_max)).cast<double>();
  delta.bottomRows(d) = (0.5 * (1.0 - resid.square() * precision) / n * inside).matrix();

  for (std::size_t l = member.layer_count(); l-- > 0;) {
    grad->weights[l].noalias() = delta * cache.act[l].transpose();
    grad->biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = member.weights[l].transpose() * delta;
    back.array() *= (cache.pre[l - 1].array() > 0.0).cast<double>();
    if (!member.masks.empty()) back.array().colwise() *= member.masks[l - 1].array();
    delta = std::move(back);
  }
  return loss;
}

Eigen::VectorXd flatten(const Gradients& g) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < g.weights.size(); ++l) n += g.weights[l].size() + g.biases[l].size();
  Eigen::VectorXd out(n);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    out.segment(at, g.weights[l].size()) = g.weights[l].reshaped();
    at += g.weights[l].size();
    out.segment(at, g.biases[l].size()) = g.biases[l];
    at += g.biases[l].size();
  }
  return out;
}

Eigen::VectorXd flatten(const PneMember& member) { return flatten(Gradients{member.weights, member.biases}); }

void unflatten(PneMember& member, const Eigen::VectorXd& params) {
  if (params.size() != member.parameter_count()) throw std::invalid_argument("unflatten: size mismatch");
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < member.layer_count(); ++l) {
    member.weights[l].reshaped() = params.segment(at, member.weights[l].size());
    at += member.weights[l].size();
    member.biases[l] = params.segment(at, member.biases[l].size());
    at += member.biases[l].size();
  }
}

AdamState::AdamState(const PneMember& shape) : m_(zeros_like(shape)), v_(zeros_like(shape)) {}

void AdamState::step(PneMember& member, const Gradients& grad, const AdamConfig& cfg) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  const double rate = cfg.learning_rate / c1;
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    param.array() -= rate * m.array() / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  for (std::size_t l = 0; l < member.layer_count(); ++l) {
    update(member.weights[l], m_.weights[l], v_.weights[l], grad.weights[l]);
    update(member.biases[l], m_.biases[l], v_.biases[l], grad.biases[l]);
  }
}

Mixtured MixturePredictor::predict(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("predict: input dimension mismatch");
  return predict_many(x.transpose()).front();
}

PneEnsemble::PneEnsemble(PneConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  reset();
}

PneEnsemble init_ensemble(const PneConfig& cfg) { return PneEnsemble(cfg); }

void PneEnsemble::reset() {
  members_.clear();
  optimizers_.clear();
  for (int j = 0; j < cfg_.member_count; ++j) {
    Rng rng = make_rng(cfg_.seed, {kInitStream, static_cast<std::uint64_t>(j)});
    members_.push_back(init_member(cfg_, rng));
    optimizers_.emplace_back(members_.back());
  }
  input_stats_ = Standardizer::identity(cfg_.input_dim);
  target_stats_ = Standardizer::identity(cfg_.output_dim);
}

TrainReport PneEnsemble::train(const Dataset& data, int epochs) {
  data.validate();
  if (data.rows() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.input_dim() != cfg_.input_dim || data.output_dim() != cfg_.output_dim) {
    throw std::invalid_argument("train: dataset dimensions do not match the ensemble");
  }
  if (epochs < 0) epochs = cfg_.epochs;
  input_stats_ = Standardizer::fit(data.inputs);
  target_stats_ = cfg_.standardize_targets ? Standardizer::fit(data.targets) : Standardizer::identity(cfg_.output_dim);
  const Eigen::MatrixXd xs = input_stats_.apply_rows(data.inputs).transpose();
  const Eigen::MatrixXd ys = target_stats_.apply_rows(data.targets).transpose();
  const std::size_t n = data.rows();
  const auto batch = static_cast<std::size_t>(cfg_.batch_size);

  TrainReport report;
  for (std::size_t j = 0; j < members_.size(); ++j) {
    Rng rng = make_rng(cfg_.seed, {kTrainStream, train_calls_, j});
    std::vector<std::size_t> rows(n);
    if (cfg_.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    }
    Eigen::MatrixXd bx(xs.rows(), static_cast<Eigen::Index>(n));
    Eigen::MatrixXd by(ys.rows(), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      bx.col(static_cast<Eigen::Index>(i)) = xs.col(static_cast<Eigen::Index>(rows[i]));
      by.col(static_cast<Eigen::Index>(i)) = ys.col(static_cast<Eigen::Index>(rows[i]));
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<double> trace;
    Gradients grad;
    Eigen::MatrixXd mx, my;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
      }
      double total = 0.0;
      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t len = std::min(batch, n - start);
        mx.resize(bx.rows(), static_cast<Eigen::Index>(len));
        my.resize(by.rows(), static_cast<Eigen::Index>(len));
        for (std::size_t k = 0; k < len; ++k) {
          mx.col(static_cast<Eigen::Index>(k)) = bx.col(static_cast<Eigen::Index>(order[start + k]));
          my.col(static_cast<Eigen::Index>(k)) = by.col(static_cast<Eigen::Index>(order[start + k]));
        }
        double loss = 0.0;
        try {
          loss = nll_and_gradients(members_[j], mx, my, cfg_, &grad);
        } catch (const TrainingDiverged&) {
          throw TrainingDiverged(static_cast<int>(j), epoch);
        }
        optimizers_[j].step(members_[j], grad, cfg_.adam);
        total += loss * static_cast<double>(len);
      }
      if (!flatten(members_[j]).allFinite()) throw TrainingDiverged(static_cast<int>(j), epoch);
      trace.push_back(total / static_cast<double>(n));
    }
    report.epoch_loss.push_back(std::move(trace));
    report.resample.push_back(std::move(rows));
  }
  ++train_calls_;
  return report;
}

std::vector<Mixtured> PneEnsemble::predict_many(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != cfg_.input_dim) throw std::invalid_argument("predict: input dimension mismatch");
  const Eigen::MatrixXd xs = input_stats_.apply_rows(inputs).transpose();
  const Eigen::ArrayXd t_scale = target_stats_.scale.array();
  std::vector<HeadOutput> heads;
  for (const auto& m : members_) heads.push_back(forward_batch(m, xs, cfg_));

  std::vector<Mixtured> out;
  out.reserve(static_cast<std::size_t>(inputs.rows()));
  std::vector<Gaussiand> comps;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    comps.clear();
    for (const auto& h : heads) {
      const Eigen::VectorXd mean = (h.mean.col(i).array() * t_scale).matrix() + target_stats_.mean;
      const Eigen::VectorXd var = (h.log_var.col(i).array().exp() * t_scale.square()).matrix();
      comps.push_back(Gaussiand::diagonal(mean, var));
    }
    out.push_back(Mixtured::uniform(comps));
  }
  return out;
}

Eigen::MatrixXd PneEnsemble::predict_mean(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != cfg_.input_dim) throw std::invalid_argument("predict: input dimension mismatch");
  const Eigen::MatrixXd xs = input_stats_.apply_rows(inputs).transpose();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(cfg_.output_dim, inputs.rows());
  for (const auto& m : members_) sum += forward_batch(m, xs, cfg_).mean;
  sum /= static_cast<double>(members_.size());
  const Eigen::MatrixXd scaled = sum.array().colwise() * target_stats_.scale.array();
  return (scaled.colwise() + target_stats_.mean).transpose();
}

// Checkpoint ---------------------------------------------------------------

namespace {

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const nlohmann::json& j, Eigen::Index expected, const char* what) {
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != expected) {
    throw std::runtime_error(std::string("checkpoint: wrong length for ") + what);
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), expected);
}

}  // namespace

void PneEnsemble::save(const std::filesystem::path& path) const {
  nlohmann::json doc;
  doc["format"] = "paide-pne";
  doc["version"] = 1;
  doc["config"] = pne_config_to_json(cfg_);
  doc["train_calls"] = train_calls_;
  doc["input_mean"] = vector_json(input_stats_.mean);
  doc["input_scale"] = vector_json(input_stats_.scale);
  doc["target_mean"] = vector_json(target_stats_.mean);
  doc["target_scale"] = vector_json(target_stats_.scale);
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : members_) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = m.weights[l];
      layers.push_back({{"rows", w.rows()},
                        {"cols", w.cols()},
                        {"weights", std::vector<double>(w.data(), w.data() + w.size())},
                        {"bias", vector_json(m.biases[l])}});
    }
    nlohmann::json masks = nlohmann::json::array();
    for (const auto& mask : m.masks) masks.push_back(vector_json(mask));
    members.push_back({{"layers", layers}, {"masks", masks}});
  }
  doc["members"] = members;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out << doc.dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed for checkpoint '" + path.string() + "'");
}

PneEnsemble PneEnsemble::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    if (doc.at("format") != "paide-pne" || doc.at("version") != 1) {
      throw std::runtime_error("unsupported checkpoint format");
    }
    PneEnsemble ens(pne_config_from_json(doc.at("config"), "config"));
    const PneConfig& cfg = ens.cfg_;
    ens.train_calls_ = doc.at("train_calls").get<std::uint64_t>();
    ens.input_stats_ = {vector_from(doc.at("input_mean"), cfg.input_dim, "input_mean"),
                        vector_from(doc.at("input_scale"), cfg.input_dim, "input_scale")};
    ens.target_stats_ = {vector_from(doc.at("target_mean"), cfg.output_dim, "target_mean"),
                         vector_from(doc.at("target_scale"), cfg.output_dim, "target_scale")};
    const auto& members = doc.at("members");
    if (members.size() != ens.members_.size()) throw std::runtime_error("checkpoint: member count mismatch");
    for (std::size_t j = 0; j < members.size(); ++j) {
      PneMember& m = ens.members_[j];
      const auto& layers = members[j].at("layers");
      if (layers.size() != m.layer_count()) throw std::runtime_error("checkpoint: layer count mismatch");
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const Eigen::Index rows = layers[l].at("rows").get<Eigen::Index>();
        const Eigen::Index cols = layers[l].at("cols").get<Eigen::Index>();
        if (rows != m.weights[l].rows() || cols != m.weights[l].cols()) {
          throw std::runtime_error("checkpoint: layer shape mismatch");
        }
        const Eigen::VectorXd flat = vector_from(layers[l].at("weights"), rows * cols, "weights");
        m.weights[l] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            flat.data(), rows, cols);
        m.biases[l] = vector_from(layers[l].at("bias"), rows, "bias");
      }
      const auto& masks = members[j].at("masks");
      if (masks.size() != m.masks.size()) throw std::runtime_error("checkpoint: mask count mismatch");
      for (std::size_t l = 0; l < masks.size(); ++l) m.masks[l] = vector_from(masks[l], m.masks[l].size(), "mask");
      if (!flatten(m).allFinite()) throw std::runtime_error("checkpoint: non-finite parameters");
      ens.optimizers_[j] = AdamState(m);
    }
    return ens;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace paide
