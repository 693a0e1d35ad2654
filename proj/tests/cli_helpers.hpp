#pragma once

#include "paide/commands.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace cli_test {

namespace fs = std::filesystem;

/// Fresh directory removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("paide_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

inline int cli(const std::vector<std::string>& args, std::string* out = nullptr, std::string* err = nullptr) {
  std::ostringstream o, e;
  const int code = paide::run_cli(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

/// The CSV text with the named columns removed.
inline std::string drop_columns(const std::string& csv, const std::set<std::string>& names) {
  std::istringstream in(csv);
  std::string line, out;
  std::vector<bool> keep;
  bool header = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (header) {
      for (const auto& c : cells) keep.push_back(!names.count(c));
      header = false;
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i >= keep.size() || keep[i]) out += cells[i] + ',';
    }
    out += '\n';
  }
  return out;
}

/// An active learning config that runs in about a second.
inline nlohmann::json tiny_active_config() {
  return {{"data", {{"source", "hetero"}}},
          {"pne", {{"hidden_layers", {8, 8}}, {"member_count", 3}, {"epochs", 30}}},
          {"active",
           {{"init_train_size", 20},
            {"batch_size", 5},
            {"num_batches", 3},
            {"pool_size", 40},
            {"mc_pool_size", 40},
            {"test_size", 100},
            {"seeds", {0, 1}},
            {"strategies", {"random", "mc", "kl", "bhatt"}},
            {"mc_samples", 50},
            {"epochs_per_batch", 10}}}};
}

/// Every command run twice into separate directories; CSV outputs must agree
/// byte for byte once timing columns are dropped. Returns an empty string on
/// success, otherwise a description of the first difference.
inline std::string check_cli_determinism(const fs::path& root) {
  const std::set<std::string> timing{"score_seconds", "total_seconds", "seconds_per_input"};
  std::vector<std::string> outputs{"data.csv",        "grid.csv",    "model.json",      "mc.csv", "kl.csv",
                                   "bhatt_norm.csv", "active/results.csv", "active/acquisitions.csv",
                                   "bench/bench.csv", "stats/comparisons.csv"};
  const fs::path config = root / "active.json";
  write_file(config, tiny_active_config().dump());
  const fs::path bench_config = root / "bench.json";
  write_file(bench_config, nlohmann::json{{"bench",
                                           {{"dims", {1, 4}},
                                            {"ensemble_sizes", {2, 5}},
                                            {"mc_samples", {20}},
                                            {"inputs_per_cell", 5}}}}
                               .dump());

  for (const std::string run : {"a", "b"}) {
    const std::string dir = (root / run).string();
    const std::vector<std::vector<std::string>> commands{
        {"gen-data", "--dataset", "hetero", "--n", "200", "--seed", "7", "--out-dir", dir},
        {"gen-data", "--dataset", "bimodal", "--n", "30", "--seed", "8", "--out", "grid.csv", "--out-dir", dir},
        {"train", "--data", dir + "/data.csv", "--epochs", "20", "--members", "3", "--seed", "5", "--out-dir", dir},
        {"estimate", "--model", dir + "/model.json", "--inputs", dir + "/grid.csv", "--method", "mc",
         "--mc-samples", "100", "--seed", "3", "--out", "mc.csv", "--out-dir", dir},
        {"estimate", "--model", dir + "/model.json", "--inputs", dir + "/grid.csv", "--method", "kl", "--out",
         "kl.csv", "--out-dir", dir},
        {"estimate", "--model", dir + "/model.json", "--inputs", dir + "/grid.csv", "--method", "bhatt",
         "--normalize", "--out", "bhatt_norm.csv", "--out-dir", dir},
        {"active", "--config", config.string(), "--out-dir", dir + "/active"},
        {"bench", "--config", bench_config.string(), "--out-dir", dir + "/bench"},
        {"stats", "--results", dir + "/active/results.csv", "--out-dir", dir + "/stats"},
    };
    for (const auto& args : commands) {
      std::string err;
      if (const int code = cli(args, nullptr, &err); code != 0) {
        return args.front() + " exited with " + std::to_string(code) + ": " + err;
      }
    }
  }
  for (const auto& name : outputs) {
    const std::string a = drop_columns(read_file(root / "a" / name), timing);
    const std::string b = drop_columns(read_file(root / "b" / name), timing);
    if (a.empty()) return name + " is empty";
    if (a != b) return name + " differs between reruns";
  }
  return {};
}

}  // namespace cli_test
