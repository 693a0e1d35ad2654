#include "paide/commands.hpp"

#include "paide/active.hpp"
#include "paide/bench.hpp"
#include "paide/config.hpp"
#include "paide/data.hpp"
#include "paide/pne.hpp"
#include "paide/stats.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>

namespace paide {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

fs::path env_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? fs::path(env) : fs::path(kDefaultOutDir);
}

/// Absolute names are taken as given; relative ones land inside `dir`.
fs::path output_file(const fs::path& dir, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : dir / p;
}

fs::path prepare_dir(const fs::path& dir) {
  fs::create_directories(dir);
  return dir;
}

json read_config_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Config file, then flag overrides written into the same document so that
/// validation errors name the same key paths either way.
struct ConfigLayer {
  std::string path;
  std::string out_dir;
  json overrides = json::object();

  template <typename T>
  void set(const std::string& section, const std::string& key, const T& value) {
    overrides[section][key] = value;
  }

  RunConfig resolve() const {
    json j = read_config_json(path);
    try {
      if (!j.is_object()) throw ConfigError("config: top level must be an object");
      for (const auto& [section, values] : overrides.items()) {
        for (const auto& [key, value] : values.items()) j[section][key] = value;
      }
    } catch (const json::exception&) {
      throw ConfigError("config: cannot apply command-line overrides");
    }
    if (!out_dir.empty()) j["out_dir"] = out_dir;
    RunConfig cfg = run_config_from_json(j);
    if (cfg.out_dir.empty()) cfg.out_dir = env_out_dir();
    return cfg;
  }
};

void add_config_flags(CLI::App* sub, ConfigLayer& layer) {
  sub->add_option("--config", layer.path, "JSON run configuration");
  sub->add_option("--out-dir", layer.out_dir, "Output directory");
}

struct GenDataArgs {
  std::string dataset;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out = "data.csv";
  std::string out_dir;
  std::string hetero_spread = "variance";
  std::string bimodal_lambda = "rate";
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  TaskOptions options;
  options.hetero_spread = a.hetero_spread == "std" ? SpreadParam::StdDev : SpreadParam::Variance;
  options.bimodal_lambda = a.bimodal_lambda == "scale" ? ExponentialParam::Scale : ExponentialParam::Rate;
  Rng rng(a.seed);
  const Dataset data = SyntheticTask::from_name(a.dataset, options).generate(a.n, rng);
  const fs::path path = output_file(a.out_dir.empty() ? env_out_dir() : fs::path(a.out_dir), a.out);
  if (path.has_parent_path()) prepare_dir(path.parent_path());
  write_csv(data, path);
  out << "wrote " << data.rows() << " rows to " << path.string() << '\n';
  return kExitOk;
}

struct TrainArgs {
  ConfigLayer layer;
  std::string data;
  Eigen::Index input_dim = 1;
  Eigen::Index output_dim = 1;
  int epochs = 0;
  int members = 0;
  std::uint64_t seed = 0;
  std::string out = "model.json";
};

int cmd_train(TrainArgs a, const CLI::App& sub, std::ostream& out) {
  a.layer.set("data", "source", "csv");
  a.layer.set("data", "csv", a.data);
  if (sub.count("--input-dim")) a.layer.set("data", "input_dim", a.input_dim);
  if (sub.count("--output-dim")) a.layer.set("data", "output_dim", a.output_dim);
  if (sub.count("--epochs")) a.layer.set("pne", "epochs", a.epochs);
  if (sub.count("--members")) a.layer.set("pne", "member_count", a.members);
  if (sub.count("--seed")) a.layer.set("pne", "seed", a.seed);
  const RunConfig cfg = a.layer.resolve();
  const Dataset data = load_csv(cfg.data.csv, cfg.data.input_dim, cfg.data.output_dim);
  PneEnsemble ensemble = init_ensemble(cfg.active.pne);
  const TrainReport report = ensemble.train(data);
  const fs::path path = output_file(cfg.out_dir, a.out);
  if (path.has_parent_path()) prepare_dir(path.parent_path());
  ensemble.save(path);
  double final_loss = 0.0;
  for (const auto& losses : report.epoch_loss) final_loss += losses.back();
  out << "trained " << ensemble.size() << " members on " << data.rows() << " rows, mean final loss "
      << final_loss / static_cast<double>(report.epoch_loss.size()) << "; wrote " << path.string() << '\n';
  return kExitOk;
}

struct EstimateArgs {
  std::string model;
  std::string inputs;
  std::string method;
  std::size_t mc_samples = 1000;
  std::uint64_t seed = 0;
  bool normalize = false;
  std::string out = "scores.csv";
  std::string out_dir;
};

int cmd_estimate(const EstimateArgs& a, std::ostream& out) {
  if (a.method == "random") throw UsageError("estimate: --method must be mc, kl, bhatt or chernoff:<alpha>");
  Strategy strategy;
  try {
    strategy = Strategy::from_name(a.method, a.mc_samples);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("estimate: ") + e.what());
  }
  const PneEnsemble model = PneEnsemble::load(a.model);
  const Eigen::MatrixXd inputs = load_inputs_csv(a.inputs, model.input_dim());
  const bool mc = strategy.kind == Strategy::Kind::MC;
  Eigen::VectorXd std_err;
  Eigen::VectorXd scores = score_pool(strategy, model, inputs, a.seed, &std_err);
  if (a.normalize) {
    const double range = scores.maxCoeff() - scores.minCoeff();
    scores = min_max_normalize(scores);
    std_err = range > 0.0 ? Eigen::VectorXd(std_err / range) : Eigen::VectorXd::Zero(std_err.size());
  }

  const fs::path path = output_file(a.out_dir.empty() ? env_out_dir() : fs::path(a.out_dir), a.out);
  if (path.has_parent_path()) prepare_dir(path.parent_path());
  std::ofstream csv(path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write '" + path.string() + "'");
  csv << (mc ? "input_index,score,std_err\n" : "input_index,score\n");
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    csv << i << ',' << format_real(scores[i]);
    if (mc) csv << ',' << format_real(std_err[i]);
    csv << '\n';
  }
  if (!csv) throw std::runtime_error("write failed for '" + path.string() + "'");
  out << "scored " << scores.size() << " inputs with " << strategy.name() << "; wrote " << path.string() << '\n';
  return kExitOk;
}

struct ActiveArgs {
  ConfigLayer layer;
  int jobs = 1;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> strategies;
  std::size_t num_batches = 0;
};

int cmd_active(ActiveArgs a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (sub.count("--jobs")) a.layer.set("active", "jobs", a.jobs);
  if (sub.count("--seeds")) a.layer.set("active", "seeds", a.seeds);
  if (sub.count("--strategies")) a.layer.set("active", "strategies", a.strategies);
  if (sub.count("--num-batches")) a.layer.set("active", "num_batches", a.num_batches);
  const RunConfig cfg = a.layer.resolve();
  const fs::path dir = prepare_dir(cfg.out_dir);
  write_resolved_config(cfg, dir);
  const ActiveHistory history = run_experiment(cfg.active, cfg.data);
  write_results_csv(history.rows, dir / "results.csv");
  write_acquisitions_csv(history.rows, dir / "acquisitions.csv");
  const std::size_t runs = cfg.active.seeds.size() * cfg.active.strategies.size();
  out << "wrote " << history.rows.size() << " rows from " << runs << " runs to " << (dir / "results.csv").string()
      << '\n';
  if (!history.failures.empty()) {
    err << history.failures.size() << " of " << runs << " runs failed:\n";
    for (const auto& f : history.failures) err << "  " << f << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

struct BenchArgs {
  ConfigLayer layer;
  int threads = 1;
  std::size_t inputs_per_cell = 0;
};

int cmd_bench(BenchArgs a, const CLI::App& sub, std::ostream& out) {
  if (sub.count("--threads")) a.layer.set("bench", "threads", a.threads);
  if (sub.count("--inputs-per-cell")) a.layer.set("bench", "inputs_per_cell", a.inputs_per_cell);
  const RunConfig cfg = a.layer.resolve();
  const fs::path dir = prepare_dir(cfg.out_dir);
  write_resolved_config(cfg, dir);
  const auto rows = time_estimators(cfg.bench);
  write_bench_csv(rows, dir / "bench.csv");
  out << "wrote " << rows.size() << " rows to " << (dir / "bench.csv").string() << '\n';
  return kExitOk;
}

struct StatsArgs {
  ConfigLayer layer;
  std::string results;
  double alpha = 0.05;
  std::string env;
  std::string family;
  std::string alternative;
  std::string out = "comparisons.csv";
};

int cmd_stats(StatsArgs a, const CLI::App& sub, std::ostream& out) {
  if (sub.count("--results")) a.layer.set("stats", "results", a.results);
  if (sub.count("--alpha")) a.layer.set("stats", "alpha", a.alpha);
  if (sub.count("--env")) a.layer.set("stats", "env", a.env);
  if (sub.count("--family")) a.layer.set("stats", "family", a.family);
  if (sub.count("--alternative")) a.layer.set("stats", "alternative", a.alternative);
  const RunConfig cfg = a.layer.resolve();
  if (cfg.stats_results.empty()) throw UsageError("stats: --results (or stats.results in the config) is required");
  const auto rows = read_results_csv(cfg.stats_results);
  const auto comparisons = compare_strategies(rows, cfg.stats);
  const fs::path dir = prepare_dir(cfg.out_dir);
  write_resolved_config(cfg, dir);
  const fs::path path = output_file(dir, a.out);
  write_comparisons_csv(comparisons, path);
  std::size_t significant = 0;
  for (const auto& c : comparisons) significant += c.significant ? 1 : 0;
  out << significant << " of " << comparisons.size() << " comparisons significant; wrote " << path.string() << '\n';
  return kExitOk;
}

}  // namespace

Eigen::VectorXd min_max_normalize(const Eigen::VectorXd& v) {
  if (v.size() == 0) return v;
  const double lo = v.minCoeff();
  const double range = v.maxCoeff() - lo;
  if (!(range > 0.0)) return Eigen::VectorXd::Zero(v.size());
  // Exact at both ends: (lo - lo) / r == 0 and r / r == 1.
  return (v.array() - lo) / range;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pairwise-distance epistemic uncertainty for probabilistic ensembles", "paide"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
  gen_cmd->add_option("--dataset", gen.dataset, "hetero | bimodal")
      ->required()
      ->check(CLI::IsMember({"hetero", "bimodal"}));
  gen_cmd->add_option("--n", gen.n, "Number of points")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Output CSV")->capture_default_str();
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory");
  gen_cmd->add_option("--hetero-spread", gen.hetero_spread, "variance | std")
      ->check(CLI::IsMember({"variance", "std"}));
  gen_cmd->add_option("--bimodal-lambda", gen.bimodal_lambda, "rate | scale")->check(CLI::IsMember({"rate", "scale"}));

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train an ensemble on a CSV and write a checkpoint");
  add_config_flags(train_cmd, train.layer);
  train_cmd->add_option("--data", train.data, "Training CSV")->required();
  train_cmd->add_option("--input-dim", train.input_dim)->check(CLI::PositiveNumber);
  train_cmd->add_option("--output-dim", train.output_dim)->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", train.epochs);
  train_cmd->add_option("--members", train.members);
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--out", train.out, "Checkpoint file")->capture_default_str();

  EstimateArgs est;
  auto* est_cmd = app.add_subcommand("estimate", "Score inputs with a trained checkpoint");
  est_cmd->add_option("--model", est.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  est_cmd->add_option("--inputs", est.inputs, "Input CSV")->required()->check(CLI::ExistingFile);
  est_cmd->add_option("--method", est.method, "mc | kl | bhatt | chernoff:<alpha>")->required();
  est_cmd->add_option("--mc-samples", est.mc_samples)->capture_default_str()->check(CLI::PositiveNumber);
  est_cmd->add_option("--seed", est.seed, "Monte Carlo seed");
  est_cmd->add_flag("--normalize", est.normalize, "Min-max rescale scores to [0, 1]");
  est_cmd->add_option("--out", est.out, "Output CSV")->capture_default_str();
  est_cmd->add_option("--out-dir", est.out_dir, "Output directory");

  ActiveArgs active;
  auto* active_cmd = app.add_subcommand("active", "Run the active learning experiment");
  add_config_flags(active_cmd, active.layer);
  active_cmd->add_option("--jobs", active.jobs, "Worker threads over (seed, strategy) runs");
  active_cmd->add_option("--seeds", active.seeds);
  active_cmd->add_option("--strategies", active.strategies);
  active_cmd->add_option("--num-batches", active.num_batches);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time the entropy estimators");
  add_config_flags(bench_cmd, bench.layer);
  bench_cmd->add_option("--threads", bench.threads);
  bench_cmd->add_option("--inputs-per-cell", bench.inputs_per_cell);

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Welch t-tests with Holm correction over a results CSV");
  add_config_flags(stats_cmd, stats.layer);
  stats_cmd->add_option("--results", stats.results, "results.csv from the active command");
  stats_cmd->add_option("--alpha", stats.alpha);
  stats_cmd->add_option("--env", stats.env);
  stats_cmd->add_option("--family", stats.family, "batch | all");
  stats_cmd->add_option("--alternative", stats.alternative, "two-sided | less | greater");
  stats_cmd->add_option("--out", stats.out, "Output CSV")->capture_default_str();

  std::vector<const char*> argv{"paide"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (train_cmd->parsed()) return cmd_train(train, *train_cmd, out);
    if (est_cmd->parsed()) return cmd_estimate(est, out);
    if (active_cmd->parsed()) return cmd_active(active, *active_cmd, out, err);
    if (bench_cmd->parsed()) return cmd_bench(bench, *bench_cmd, out);
    if (stats_cmd->parsed()) return cmd_stats(stats, *stats_cmd, out);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace paide
