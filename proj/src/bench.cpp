#include "paide/bench.hpp"

#include "paide/data.hpp"
#include "paide/random.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <thread>

namespace paide {

namespace {

constexpr std::uint64_t kMixtureStream = 21;
constexpr std::uint64_t kMcStream = 22;

/// Runs score(i) for every input on `threads` threads, contiguous chunks.
void for_each_input(std::size_t count, int threads, const std::function<void(std::size_t)>& score) {
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) score(i);
    return;
  }
  std::vector<std::thread> pool;
  const auto t = static_cast<std::size_t>(threads);
  for (std::size_t k = 0; k < t; ++k) {
    pool.emplace_back([&, k] {
      for (std::size_t i = count * k / t; i < count * (k + 1) / t; ++i) score(i);
    });
  }
  for (auto& th : pool) th.join();
}

double median_seconds(int repetitions, const std::function<void()>& work) {
  work();  // warm-up
  std::vector<double> times;
  for (int r = 0; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    work();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

}  // namespace

void BenchConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("bench config: " + what); };
  if (dims.empty() || ensemble_sizes.empty()) fail("dims and ensemble_sizes must not be empty");
  for (const auto d : dims) {
    if (d < 1) fail("dims must be at least 1");
  }
  for (const auto m : ensemble_sizes) {
    if (m < 1) fail("ensemble_sizes must be at least 1");
  }
  for (const auto k : mc_samples) {
    if (k < 1) fail("mc_samples must be at least 1");
  }
  if (inputs_per_cell < 1) fail("inputs_per_cell must be at least 1");
  if (repetitions < 3) fail("repetitions must be at least 3");
  if (threads < 1) fail("threads must be at least 1");
  for (const auto& e : estimators) {
    if (e != "mc" && e != "kl" && e != "bhatt") fail("unknown estimator '" + e + "'");
  }
}

std::vector<Mixtured> bench_mixtures(Eigen::Index dim, int size, std::size_t count, std::uint64_t seed) {
  Rng rng = make_rng(seed, {kMixtureStream, static_cast<std::uint64_t>(dim), static_cast<std::uint64_t>(size)});
  std::normal_distribution<double> mean(0.0, 1.0);
  std::uniform_real_distribution<double> var(0.5, 2.0);
  std::vector<Mixtured> out;
  out.reserve(count);
  std::vector<Gaussiand> comps;
  for (std::size_t i = 0; i < count; ++i) {
    comps.clear();
    for (int j = 0; j < size; ++j) {
      Eigen::VectorXd mu(dim), v(dim);
      for (Eigen::Index k = 0; k < dim; ++k) {
        mu[k] = mean(rng);
        v[k] = var(rng);
      }
      comps.push_back(Gaussiand::diagonal(mu, v));
    }
    out.push_back(Mixtured::uniform(comps));
  }
  return out;
}

std::size_t count_distance_calls(const Mixtured& mix, const Distance& distance) {
  std::size_t calls = 0;
  pairwise_epistemic(
      mix,
      [&](std::size_t i, std::size_t j) {
        ++calls;
        return distance(mix.component(i), mix.component(j));
      },
      distance.symmetric());
  return calls;
}

std::vector<BenchRow> time_estimators(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<int> thread_modes{1};
  if (cfg.threads > 1) thread_modes.push_back(cfg.threads);
  const std::size_t n = cfg.inputs_per_cell;

  std::vector<BenchRow> rows;
  for (const auto dim : cfg.dims) {
    for (const int m : cfg.ensemble_sizes) {
      const std::vector<Mixtured> mixtures = bench_mixtures(dim, m, n, cfg.seed);
      std::vector<double> sink(n);
      for (const int threads : thread_modes) {
        for (const auto& estimator : cfg.estimators) {
          if (estimator == "mc") {
            for (const std::size_t k : cfg.mc_samples) {
              const double seconds = median_seconds(cfg.repetitions, [&] {
                for_each_input(n, threads, [&](std::size_t i) {
                  const McConfig mc{k, derive_seed(cfg.seed, {kMcStream, static_cast<std::uint64_t>(i)})};
                  sink[i] = epistemic_mc(mixtures[i], mc).value;
                });
              });
              rows.push_back({"mc", dim, m, k, n, seconds, seconds / static_cast<double>(n), threads, 0});
            }
            continue;
          }
          const Distance distance = estimator == "kl" ? Distance::kl() : Distance::bhattacharyya();
          const double seconds = median_seconds(cfg.repetitions, [&] {
            for_each_input(n, threads, [&](std::size_t i) { sink[i] = epistemic_paide(mixtures[i], distance); });
          });
          rows.push_back({estimator, dim, m, 0, n, seconds, seconds / static_cast<double>(n), threads,
                          count_distance_calls(mixtures.front(), distance)});
        }
      }
    }
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "estimator,dim,ensemble_size,mc_samples,inputs_scored,total_seconds,seconds_per_input,threads,"
         "distance_calls\n";
  for (const auto& r : rows) {
    out << r.estimator << ',' << r.dim << ',' << r.ensemble_size << ',' << r.mc_samples << ',' << r.inputs_scored
        << ',' << format_real(r.total_seconds) << ',' << format_real(r.seconds_per_input) << ',' << r.threads << ','
        << r.distance_calls << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace paide
