#include "paide/active.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace paide {

namespace {

// Sub-stream tags; shared by all strategies at a given seed.
constexpr std::uint64_t kInitialStream = 11;
constexpr std::uint64_t kTestStream = 12;
constexpr std::uint64_t kModelStream = 13;
constexpr std::uint64_t kPoolStream = 14;
constexpr std::uint64_t kScoreStream = 15;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

Strategy Strategy::from_name(std::string_view name, std::size_t mc_samples) {
  if (name == "random") return random();
  if (name == "mc") return mc(mc_samples);
  if (name == "kl") return paide(Distance::kl());
  if (name == "bhatt") return paide(Distance::bhattacharyya());
  if (name.starts_with("chernoff:")) {
    const std::string_view digits = name.substr(9);
    double alpha = 0.0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), alpha);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && alpha >= 0.0 && alpha <= 1.0) {
      return paide(Distance::chernoff(alpha));
    }
  }
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

std::string Strategy::name() const {
  switch (kind) {
    case Kind::Random: return "random";
    case Kind::MC: return "mc";
    case Kind::PaiDE:
      return distance.kind == Distance::Kind::Chernoff ? "chernoff:" + format_real(distance.alpha) : distance.name();
  }
  return "?";
}

Eigen::VectorXd score_pool(const Strategy& strategy, const MixturePredictor& predictor,
                           const Eigen::MatrixXd& candidates, std::uint64_t seed, Eigen::VectorXd* std_err) {
  const Eigen::Index n = candidates.rows();
  Eigen::VectorXd scores(n);
  if (std_err) *std_err = Eigen::VectorXd::Zero(n);
  if (strategy.kind == Strategy::Kind::Random) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) scores[i] = u(rng);
    return scores;
  }
  const std::vector<Mixtured> mixtures = predictor.predict_many(candidates);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Mixtured& mix = mixtures[static_cast<std::size_t>(i)];
    if (strategy.kind == Strategy::Kind::MC) {
      const McConfig mc{strategy.mc_samples, derive_seed(seed, {static_cast<std::uint64_t>(i)})};
      const auto est = epistemic_mc(mix, mc);
      scores[i] = est.value;
      if (std_err) (*std_err)[i] = est.standard_error;
    } else {
      scores[i] = epistemic_paide(mix, strategy.distance);
    }
  }
  return scores;
}

std::vector<std::size_t> select_batch(const Eigen::VectorXd& scores, std::size_t b) {
  const auto n = static_cast<std::size_t>(scores.size());
  if (b > n) throw std::invalid_argument("batch size exceeds the number of scores");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t c) {
    const double sa = scores[static_cast<Eigen::Index>(a)];
    const double sc = scores[static_cast<Eigen::Index>(c)];
    return sa > sc || (sa == sc && a < c);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(b), idx.end(), before);
  idx.resize(b);
  return idx;
}

double rmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& targets, RmseConvention convention) {
  if (predicted.rows() != targets.rows() || predicted.cols() != targets.cols()) {
    throw std::invalid_argument("rmse: shape mismatch");
  }
  if (targets.rows() == 0) throw std::invalid_argument("rmse: empty test set");
  double mse = (predicted - targets).squaredNorm() / static_cast<double>(targets.rows());
  if (convention == RmseConvention::MeanOverDims) mse /= static_cast<double>(targets.cols());
  return std::sqrt(mse);
}

double rmse(const MixturePredictor& predictor, const Dataset& test, RmseConvention convention) {
  const std::vector<Mixtured> mixtures = predictor.predict_many(test.inputs);
  Eigen::MatrixXd predicted(test.targets.rows(), test.targets.cols());
  for (std::size_t i = 0; i < mixtures.size(); ++i) {
    predicted.row(static_cast<Eigen::Index>(i)) = mixtures[i].mean().transpose();
  }
  return rmse(predicted, test.targets, convention);
}

double log_likelihood(const MixturePredictor& predictor, const Dataset& test) {
  if (test.rows() == 0) throw std::invalid_argument("log_likelihood: empty test set");
  const std::vector<Mixtured> mixtures = predictor.predict_many(test.inputs);
  double sum = 0.0;
  for (std::size_t i = 0; i < mixtures.size(); ++i) {
    const Eigen::VectorXd y = test.targets.row(static_cast<Eigen::Index>(i)).transpose();
    sum += mixture_log_density(mixtures[i], y);
  }
  return sum / static_cast<double>(mixtures.size());
}

std::size_t ActiveConfig::resolved_init_size(Eigen::Index input_dim) const {
  if (init_train_size > 0) return init_train_size;
  return input_dim == 1 ? 100 : 200;
}

void ActiveConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("active config: " + what); };
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (batch_size > pool_size) fail("batch_size exceeds pool_size");
  if (batch_size > mc_pool_size) fail("batch_size exceeds mc_pool_size");
  if (test_size < 1) fail("test_size must be at least 1");
  if (seeds.empty()) fail("seeds must not be empty");
  if (strategies.empty()) fail("strategies must not be empty");
  for (const auto& s : strategies) Strategy::from_name(s, mc_samples);
  if (mc_samples < 1) fail("mc_samples must be at least 1");
  if (epochs_per_batch < 0) fail("epochs_per_batch must be non-negative");
  if (jobs < 1) fail("jobs must be at least 1");
  pne.validate();
}

void ActiveHistory::append(ActiveHistory other) {
  rows.insert(rows.end(), std::make_move_iterator(other.rows.begin()), std::make_move_iterator(other.rows.end()));
  failures.insert(failures.end(), other.failures.begin(), other.failures.end());
}

Experiment prepare_experiment(const ActiveConfig& cfg, const DataSource& source, std::uint64_t seed) {
  Experiment ex;
  Rng initial_rng = make_rng(seed, {kInitialStream});
  Rng test_rng = make_rng(seed, {kTestStream});
  if (source.synthetic()) {
    const auto task = SyntheticTask::from_name(source.name, source.options);
    ex.initial = task.generate(cfg.resolved_init_size(1), initial_rng);
    ex.test = task.generate(cfg.test_size, test_rng);
    return ex;
  }
  ex.source = load_csv(source.csv, source.input_dim, source.output_dim);
  ex.source->validate();
  ex.used.assign(ex.source->rows(), false);
  auto take = [&](std::size_t n, Rng& rng) {
    Pool pool = make_pool(*ex.source, n, rng, ex.used);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      rows.push_back(pool.source_row(i));
      ex.used[pool.source_row(i)] = true;
    }
    return ex.source->subset(rows);
  };
  if (source.test_csv.empty()) {
    ex.test = take(cfg.test_size, test_rng);
  } else {
    ex.test = load_csv(source.test_csv, source.input_dim, source.output_dim);
    ex.test.validate();
  }
  ex.initial = take(cfg.resolved_init_size(source.input_dim), initial_rng);
  return ex;
}

ActiveHistory run_active_learning(const ActiveConfig& cfg, const Strategy& strategy, const DataSource& source,
                                  std::uint64_t seed) {
  Experiment ex = prepare_experiment(cfg, source, seed);
  PneConfig pc = cfg.pne;
  pc.input_dim = ex.initial.input_dim();
  pc.output_dim = ex.initial.output_dim();
  pc.seed = derive_seed(seed, {kModelStream});
  PneEnsemble ensemble(pc);
  const int initial_epochs = cfg.epochs_initial < 0 ? pc.epochs : cfg.epochs_initial;
  const std::optional<SyntheticTask> task =
      source.synthetic() ? std::optional(SyntheticTask::from_name(source.name, source.options)) : std::nullopt;

  ActiveHistory history;
  Dataset train = ex.initial;
  std::vector<bool> used = ex.used;
  auto record = [&](std::size_t batch, double seconds, std::vector<std::size_t> acquired) {
    BatchRecord r{seed, strategy.name(), batch, 0.0, kNaN, seconds, std::move(acquired), false};
    r.rmse = rmse(ensemble.predict_mean(ex.test.inputs), ex.test.targets, cfg.rmse_convention);
    if (cfg.record_loglik) r.loglik = log_likelihood(ensemble, ex.test);
    history.rows.push_back(std::move(r));
  };

  std::size_t batch = 0;
  try {
    ensemble.train(train, initial_epochs);
    record(0, 0.0, {});
    for (batch = 1; batch <= cfg.num_batches; ++batch) {
      Rng pool_rng = make_rng(seed, {kPoolStream, batch});
      std::size_t size = strategy.kind == Strategy::Kind::MC ? cfg.mc_pool_size : cfg.pool_size;
      if (!task) {
        const auto remaining = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
        size = std::min(size, std::max(remaining, cfg.batch_size));
      }
      Pool pool = task ? make_pool(*task, size, pool_rng) : make_pool(*ex.source, size, pool_rng, used);

      const auto start = std::chrono::steady_clock::now();
      const Eigen::VectorXd scores =
          score_pool(strategy, ensemble, pool.candidates(), derive_seed(seed, {kScoreStream, batch}));
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

      const std::vector<std::size_t> picks = select_batch(scores, cfg.batch_size);
      for (const std::size_t i : picks) {
        train.append(pool.candidate(i), pool.acquire(i));
        if (pool.has_source_rows()) used[pool.source_row(i)] = true;
      }
      if (cfg.warm_start) {
        ensemble.train(train, cfg.epochs_per_batch);
      } else {
        ensemble.reset();
        ensemble.train(train, initial_epochs);
      }
      record(batch, seconds, picks);
    }
  } catch (const TrainingDiverged& e) {
    history.failures.push_back("seed " + std::to_string(seed) + ", strategy " + strategy.name() + ", batch " +
                               std::to_string(batch) + ": " + e.what());
    for (; batch <= cfg.num_batches; ++batch) {
      history.rows.push_back({seed, strategy.name(), batch, kNaN, kNaN, kNaN, {}, true});
    }
  }
  return history;
}

ActiveHistory run_experiment(const ActiveConfig& cfg, const DataSource& source) {
  cfg.validate();
  std::vector<std::pair<std::uint64_t, Strategy>> runs;
  for (const auto seed : cfg.seeds) {
    for (const auto& name : cfg.strategies) runs.emplace_back(seed, Strategy::from_name(name, cfg.mc_samples));
  }
  std::vector<ActiveHistory> results(runs.size());
  std::vector<std::exception_ptr> errors(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < runs.size(); k = next++) {
      try {
        results[k] = run_active_learning(cfg, runs[k].second, source, runs[k].first);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), runs.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  ActiveHistory all;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    if (errors[k]) std::rethrow_exception(errors[k]);
    all.append(std::move(results[k]));
  }
  return all;
}

void write_results_csv(const std::vector<BatchRecord>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "seed,strategy,batch,rmse,loglik,score_seconds\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << r.strategy << ',' << r.batch << ',' << format_real(r.rmse) << ','
        << format_real(r.loglik) << ',' << format_real(r.score_seconds) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void write_acquisitions_csv(const std::vector<BatchRecord>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "seed,strategy,batch,pool_index\n";
  for (const auto& r : rows) {
    for (const auto i : r.acquired) out << r.seed << ',' << r.strategy << ',' << r.batch << ',' << i << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<BatchRecord> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "seed,strategy,batch,rmse,loglik,score_seconds") {
    throw CsvError("'" + path.string() + "': unexpected results header");
  }
  std::vector<BatchRecord> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t comma; (comma = line.find(',', start)) != std::string::npos; start = comma + 1) {
      cells.push_back(line.substr(start, comma - start));
    }
    cells.push_back(line.substr(start));
    const std::string where = "'" + path.string() + "' line " + std::to_string(line_no);
    if (cells.size() != 6) throw CsvError(where + ": expected 6 cells");
    auto number = [&](const std::string& cell, auto& value) {
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
        throw CsvError(where + ": invalid number '" + cell + "'");
      }
    };
    BatchRecord r;
    number(cells[0], r.seed);
    r.strategy = cells[1];
    number(cells[2], r.batch);
    number(cells[3], r.rmse);
    number(cells[4], r.loglik);
    number(cells[5], r.score_seconds);
    r.failed = std::isnan(r.rmse);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace paide
