#include "doctest.h"
#include "paide/bench.hpp"

#include <filesystem>
#include <fstream>

using paide::BenchConfig;

TEST_CASE("benchmark mixtures") {
  const auto a = paide::bench_mixtures(4, 5, 20, 3);
  const auto b = paide::bench_mixtures(4, 5, 20, 3);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].size() == 5);
    CHECK(a[i].dim() == 4);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(a[i].component(j).mean() == b[i].component(j).mean());
      const auto v = a[i].component(j).variances();
      CHECK(v.minCoeff() >= 0.5);
      CHECK(v.maxCoeff() <= 2.0);
    }
  }
  CHECK(paide::bench_mixtures(4, 5, 1, 4).front().component(0).mean() != a.front().component(0).mean());
}

TEST_CASE("distance call counts") {
  for (const int m : {2, 5, 20}) {
    const auto mix = paide::bench_mixtures(3, m, 1, 0).front();
    const auto mm = static_cast<std::size_t>(m);
    CHECK(paide::count_distance_calls(mix, paide::Distance::bhattacharyya()) == (mm * mm - mm) / 2);
    CHECK(paide::count_distance_calls(mix, paide::Distance::kl()) == mm * mm - mm);
  }
}

TEST_CASE("timing grid") {
  BenchConfig cfg;
  cfg.dims = {1, 3};
  cfg.ensemble_sizes = {2, 4};
  cfg.mc_samples = {10, 20};
  cfg.inputs_per_cell = 5;
  const auto rows = paide::time_estimators(cfg);
  // Per (D, M): one row per K for MC plus KL and Bhattacharyya.
  REQUIRE(rows.size() == 2 * 2 * 4);
  for (const auto& r : rows) {
    CHECK(r.total_seconds > 0.0);
    CHECK(r.seconds_per_input == doctest::Approx(r.total_seconds / 5.0));
    CHECK(r.inputs_scored == 5);
    CHECK(r.threads == 1);
    CHECK((r.estimator == "mc") == (r.mc_samples > 0));
  }
  CHECK(rows[0].estimator == "mc");
  CHECK(rows[0].mc_samples == 10);
  CHECK(rows[2].estimator == "kl");
  CHECK(rows[2].distance_calls == 2);
  CHECK(rows[3].distance_calls == 1);

  cfg.threads = 2;
  const auto both = paide::time_estimators(cfg);
  CHECK(both.size() == 2 * rows.size());
  CHECK(both[4].threads == 2);

  const auto path = std::filesystem::temp_directory_path() / "paide_test_bench.csv";
  paide::write_bench_csv(rows, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "estimator,dim,ensemble_size,mc_samples,inputs_scored,total_seconds,seconds_per_input,threads,distance_calls");
  std::filesystem::remove(path);
}

TEST_CASE("monte carlo cost is roughly linear in the sample count") {
  BenchConfig cfg;
  cfg.dims = {8};
  cfg.ensemble_sizes = {5};
  cfg.mc_samples = {1000, 10000};
  cfg.inputs_per_cell = 100;
  cfg.estimators = {"mc"};
  const auto rows = paide::time_estimators(cfg);
  REQUIRE(rows.size() == 2);
  const double ratio = rows[1].total_seconds / rows[0].total_seconds;
  CHECK(ratio >= 5.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("bench config validation") {
  BenchConfig cfg;
  cfg.repetitions = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = BenchConfig{};
  cfg.estimators = {"kl", "hellinger"};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = BenchConfig{};
  cfg.dims = {0};
  CHECK_THROWS_AS(paide::time_estimators(cfg), std::invalid_argument);
}
