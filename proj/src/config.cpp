#include "paide/config.hpp"

#include <fstream>
#include <set>

namespace paide {

using nlohmann::json;

namespace {

/// Reads optional keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("config: '" + where_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& value) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      value = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: bad value for '" + path(key) + "'");
    }
  }

  /// Reads a string and maps it through `choices`.
  template <typename E>
  void choose(const char* key, E& value, std::initializer_list<std::pair<const char*, E>> choices) {
    std::string name;
    bool present = j_.contains(key);
    read(key, name);
    if (!present) return;
    for (const auto& [label, e] : choices) {
      if (name == label) {
        value = e;
        return;
      }
    }
    throw ConfigError("config: bad value '" + name + "' for '" + path(key) + "'");
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown key '" + path(key) + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_pne(Section& s, PneConfig& c) {
  s.read("input_dim", c.input_dim);
  s.read("output_dim", c.output_dim);
  s.read("hidden_layers", c.hidden_layers);
  s.read("member_count", c.member_count);
  s.read("dropout_rate", c.dropout_rate);
  s.read("log_var_min", c.log_var_min);
  s.read("log_var_max", c.log_var_max);
  s.read("learning_rate", c.adam.learning_rate);
  s.read("beta1", c.adam.beta1);
  s.read("beta2", c.adam.beta2);
  s.read("epsilon", c.adam.epsilon);
  s.read("epochs", c.epochs);
  s.read("batch_size", c.batch_size);
  s.read("seed", c.seed);
  s.read("bootstrap", c.bootstrap);
  s.read("standardize_targets", c.standardize_targets);
  s.finish();
}

template <typename Validate>
void checked(const std::string& section, Validate&& validate) {
  try {
    validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: " + section + ": " + e.what());
  }
}

}  // namespace

json pne_config_to_json(const PneConfig& c) {
  return {{"input_dim", c.input_dim},
          {"output_dim", c.output_dim},
          {"hidden_layers", c.hidden_layers},
          {"member_count", c.member_count},
          {"dropout_rate", c.dropout_rate},
          {"log_var_min", c.log_var_min},
          {"log_var_max", c.log_var_max},
          {"learning_rate", c.adam.learning_rate},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"epsilon", c.adam.epsilon},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"bootstrap", c.bootstrap},
          {"standardize_targets", c.standardize_targets}};
}

PneConfig pne_config_from_json(const json& j, const std::string& where) {
  PneConfig c;
  Section s(j, where);
  read_pne(s, c);
  checked(where, [&] { c.validate(); });
  return c;
}

json to_json(const RunConfig& cfg) {
  const auto& a = cfg.active;
  const auto& d = cfg.data;
  const auto& b = cfg.bench;
  const auto& st = cfg.stats;
  return {
      {"out_dir", cfg.out_dir.string()},
      {"data",
       {{"source", d.name},
        {"csv", d.csv.string()},
        {"test_csv", d.test_csv.string()},
        {"input_dim", d.input_dim},
        {"output_dim", d.output_dim},
        {"hetero_spread", d.options.hetero_spread == SpreadParam::Variance ? "variance" : "std"},
        {"bimodal_lambda", d.options.bimodal_lambda == ExponentialParam::Rate ? "rate" : "scale"}}},
      {"pne", pne_config_to_json(a.pne)},
      {"active",
       {{"init_train_size", a.init_train_size},
        {"batch_size", a.batch_size},
        {"num_batches", a.num_batches},
        {"pool_size", a.pool_size},
        {"mc_pool_size", a.mc_pool_size},
        {"test_size", a.test_size},
        {"seeds", a.seeds},
        {"strategies", a.strategies},
        {"mc_samples", a.mc_samples},
        {"epochs_initial", a.epochs_initial},
        {"epochs_per_batch", a.epochs_per_batch},
        {"warm_start", a.warm_start},
        {"rmse_convention", a.rmse_convention == RmseConvention::MeanOverDims ? "mean" : "sum"},
        {"record_loglik", a.record_loglik},
        {"jobs", a.jobs}}},
      {"bench",
       {{"dims", b.dims},
        {"ensemble_sizes", b.ensemble_sizes},
        {"mc_samples", b.mc_samples},
        {"inputs_per_cell", b.inputs_per_cell},
        {"repetitions", b.repetitions},
        {"seed", b.seed},
        {"threads", b.threads},
        {"estimators", b.estimators}}},
      {"stats",
       {{"results", cfg.stats_results.string()},
        {"env", st.env},
        {"alpha", st.alpha},
        {"family", st.family == Family::Batch ? "batch" : "all"},
        {"alternative", st.alternative == Alternative::TwoSided ? "two-sided"
                        : st.alternative == Alternative::Less   ? "less"
                                                                : "greater"}}},
  };
}

RunConfig run_config_from_json(const json& j, RunConfig cfg) {
  Section root(j, "");
  std::string out_dir = cfg.out_dir.string();
  root.read("out_dir", out_dir);
  cfg.out_dir = out_dir;

  if (const json* d = root.child("data")) {
    Section s(*d, "data");
    std::string csv = cfg.data.csv.string(), test_csv = cfg.data.test_csv.string();
    s.choose("source", cfg.data.name, {{"hetero", std::string("hetero")}, {"bimodal", std::string("bimodal")},
                                       {"csv", std::string("csv")}});
    s.read("csv", csv);
    s.read("test_csv", test_csv);
    s.read("input_dim", cfg.data.input_dim);
    s.read("output_dim", cfg.data.output_dim);
    s.choose("hetero_spread", cfg.data.options.hetero_spread,
             {{"variance", SpreadParam::Variance}, {"std", SpreadParam::StdDev}});
    s.choose("bimodal_lambda", cfg.data.options.bimodal_lambda,
             {{"rate", ExponentialParam::Rate}, {"scale", ExponentialParam::Scale}});
    s.finish();
    cfg.data.csv = csv;
    cfg.data.test_csv = test_csv;
  }
  if (cfg.data.input_dim < 1 || cfg.data.output_dim < 1) throw ConfigError("config: data dims must be at least 1");
  if (cfg.data.name == "csv" && cfg.data.csv.empty()) {
    throw ConfigError("config: 'data.csv' is required for csv sources");
  }

  if (const json* p = root.child("pne")) {
    Section s(*p, "pne");
    read_pne(s, cfg.active.pne);
  }
  if (const json* a = root.child("active")) {
    Section s(*a, "active");
    auto& c = cfg.active;
    s.read("init_train_size", c.init_train_size);
    s.read("batch_size", c.batch_size);
    s.read("num_batches", c.num_batches);
    s.read("pool_size", c.pool_size);
    s.read("mc_pool_size", c.mc_pool_size);
    s.read("test_size", c.test_size);
    s.read("seeds", c.seeds);
    s.read("strategies", c.strategies);
    s.read("mc_samples", c.mc_samples);
    s.read("epochs_initial", c.epochs_initial);
    s.read("epochs_per_batch", c.epochs_per_batch);
    s.read("warm_start", c.warm_start);
    s.choose("rmse_convention", c.rmse_convention,
             {{"mean", RmseConvention::MeanOverDims}, {"sum", RmseConvention::SumOverDims}});
    s.read("record_loglik", c.record_loglik);
    s.read("jobs", c.jobs);
    s.finish();
  }
  if (cfg.data.synthetic()) {
    cfg.active.pne.input_dim = 1;
    cfg.active.pne.output_dim = 1;
  } else {
    cfg.active.pne.input_dim = cfg.data.input_dim;
    cfg.active.pne.output_dim = cfg.data.output_dim;
  }
  checked("active", [&] { cfg.active.validate(); });

  if (const json* b = root.child("bench")) {
    Section s(*b, "bench");
    auto& c = cfg.bench;
    s.read("dims", c.dims);
    s.read("ensemble_sizes", c.ensemble_sizes);
    s.read("mc_samples", c.mc_samples);
    s.read("inputs_per_cell", c.inputs_per_cell);
    s.read("repetitions", c.repetitions);
    s.read("seed", c.seed);
    s.read("threads", c.threads);
    s.read("estimators", c.estimators);
    s.finish();
  }
  checked("bench", [&] { cfg.bench.validate(); });

  if (const json* st = root.child("stats")) {
    Section s(*st, "stats");
    auto& c = cfg.stats;
    std::string results = cfg.stats_results.string();
    s.read("results", results);
    cfg.stats_results = results;
    s.read("env", c.env);
    s.read("alpha", c.alpha);
    s.choose("family", c.family, {{"batch", Family::Batch}, {"all", Family::All}});
    s.choose("alternative", c.alternative,
             {{"two-sided", Alternative::TwoSided}, {"less", Alternative::Less}, {"greater", Alternative::Greater}});
    s.finish();
  }
  if (!(cfg.stats.alpha > 0.0 && cfg.stats.alpha < 1.0)) throw ConfigError("config: 'stats.alpha' must lie in (0, 1)");
  root.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  const auto path = dir / "resolved_config.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << to_json(cfg).dump(2) << '\n';
}

}  // namespace paide
