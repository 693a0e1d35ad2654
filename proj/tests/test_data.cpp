#include "doctest.h"
#include "paide/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

using paide::Dataset;
using paide::Rng;
using paide::SyntheticTask;

namespace {

constexpr std::size_t kLarge = 100000;

double normal_cdf(double x, double mean, double var) {
  return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * var));
}

double hetero_cdf(double x) {
  return (normal_cdf(x, -4.0, 0.4) + normal_cdf(x, 0.0, 0.9) + normal_cdf(x, 4.0, 0.4)) / 3.0;
}

double bimodal_cdf(double x) { return x <= 0.0 ? 0.0 : -std::expm1(-2.0 * x); }

/// Pearson statistic over interior bins [lo, hi) plus one bin per open tail.
double chi_square(const Eigen::VectorXd& xs, double lo, double hi, int bins, double (*cdf)(double),
                  bool lower_tail) {
  std::vector<double> edges;
  if (lower_tail) edges.push_back(-INFINITY);
  for (int b = 0; b <= bins; ++b) edges.push_back(lo + (hi - lo) * b / bins);
  edges.push_back(INFINITY);
  std::vector<double> counts(edges.size() - 1, 0.0);
  for (const double x : xs) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), x);
    counts[static_cast<std::size_t>(it - edges.begin()) - 1] += 1.0;
  }
  const double n = static_cast<double>(xs.size());
  double stat = 0.0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const double lo_p = std::isinf(edges[b]) ? 0.0 : cdf(edges[b]);
    const double hi_p = std::isinf(edges[b + 1]) ? 1.0 : cdf(edges[b + 1]);
    const double expected = n * (hi_p - lo_p);
    stat += (counts[b] - expected) * (counts[b] - expected) / expected;
  }
  return stat;
}

double sample_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (const double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (const double a : v) ss += (a - mean) * (a - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("paide_test_" + name);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("hetero generator") {
  Rng rng(11);
  const Dataset data = paide::gen_hetero(kLarge, rng);
  REQUIRE(data.rows() == kLarge);
  REQUIRE(data.input_dim() == 1);
  REQUIRE(data.output_dim() == 1);
  CHECK(data.inputs.allFinite());
  CHECK(data.targets.allFinite());

  const Eigen::VectorXd x = data.inputs.col(0);
  const Eigen::VectorXd y = data.targets.col(0);
  CHECK(std::abs(x.mean()) < 0.02);

  SUBCASE("nearest-center fractions match the mixture") {
    // Exact probabilities of landing nearest to each center.
    const double p_left = hetero_cdf(-2.0);
    const double p_right = 1.0 - hetero_cdf(2.0);
    const double p_mid = 1.0 - p_left - p_right;
    double left = 0, mid = 0, right = 0;
    for (const double v : x) {
      if (v < -2.0) ++left;
      else if (v > 2.0) ++right;
      else ++mid;
    }
    const double n = static_cast<double>(kLarge);
    CHECK(std::abs(left / n - p_left) < 0.01);
    CHECK(std::abs(mid / n - p_mid) < 0.01);
    CHECK(std::abs(right / n - p_right) < 0.01);
    CHECK(std::abs(left / n - 1.0 / 3.0) < 0.01);
    CHECK(std::abs(right / n - 1.0 / 3.0) < 0.01);
    CHECK(std::abs(mid / n - 1.0 / 3.0) < 0.015);
  }

  SUBCASE("conditional spread follows the noise envelope") {
    std::vector<double> near_pi, near_zero;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (std::abs(x[i] - std::numbers::pi) < 0.05) near_pi.push_back(y[i]);
      if (std::abs(x[i]) < 0.05) near_zero.push_back(y[i]);
    }
    REQUIRE(near_pi.size() > 200);
    REQUIRE(near_zero.size() > 200);
    CHECK(sample_std(near_pi) < 0.3);
    CHECK(std::abs(sample_std(near_zero) - 3.0) < 0.15);
  }

  SUBCASE("reconstructed noise is standard normal and bounds y") {
    double max_z = 0.0, sum = 0.0, sum_sq = 0.0;
    Eigen::Index used = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double envelope = 3.0 * std::abs(std::cos(x[i] / 2.0));
      if (envelope < 1e-3) continue;
      const double z = (y[i] - 7.0 * std::sin(x[i])) / envelope;
      max_z = std::max(max_z, std::abs(z));
      sum += z;
      sum_sq += z * z;
      ++used;
    }
    const double mean = sum / static_cast<double>(used);
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(sum_sq / static_cast<double>(used) - 1.0) < 0.03);
    CHECK(y.cwiseAbs().maxCoeff() <= 7.0 + 3.0 * max_z);
  }

  SUBCASE("x histogram passes a chi-square test") {
    // 40 interior bins plus two tails: 41 degrees of freedom, 0.999 quantile.
    CHECK(chi_square(x, -7.0, 7.0, 40, hetero_cdf, true) < 74.74493839842374);
  }
}

TEST_CASE("hetero spread read as standard deviation") {
  Rng rng(3);
  paide::TaskOptions options;
  options.hetero_spread = paide::SpreadParam::StdDev;
  const Dataset data = paide::gen_hetero(kLarge, rng, options);
  std::vector<double> right;
  for (const double v : data.inputs.col(0)) {
    if (v > 2.5) right.push_back(v);
  }
  CHECK(std::abs(sample_std(right) - 0.4) < 0.02);
}

TEST_CASE("bimodal generator") {
  Rng rng(12);
  const Dataset data = paide::gen_bimodal(kLarge, rng);
  const Eigen::VectorXd x = data.inputs.col(0);
  const Eigen::VectorXd y = data.targets.col(0);
  CHECK((x.array() >= 0.0).all());
  CHECK(std::abs(x.mean() - 0.5) < 0.01);

  SUBCASE("branch fraction") {
    // The branches are at least 15 apart for x < 1, so the nearest one
    // identifies n up to a negligible noise overlap.
    double second = 0, total = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] >= 1.0) continue;
      const double b0 = 10.0 * std::sin(x[i]);
      const double b1 = 10.0 * std::cos(x[i]) + 20.0 - x[i];
      second += std::abs(y[i] - b1) < std::abs(y[i] - b0) ? 1.0 : 0.0;
      total += 1.0;
    }
    CHECK(std::abs(second / total - 0.5) < 0.005);
  }

  SUBCASE("modes near x = 0") {
    std::vector<double> low, high;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] >= 0.02) continue;
      (y[i] < 15.0 ? low : high).push_back(y[i]);
    }
    REQUIRE(low.size() > 300);
    REQUIRE(high.size() > 300);
    double low_mean = 0, high_mean = 0;
    for (const double v : low) low_mean += v / static_cast<double>(low.size());
    for (const double v : high) high_mean += v / static_cast<double>(high.size());
    CHECK(std::abs(low_mean) < 0.3);
    CHECK(std::abs(high_mean - 30.0) < 0.3);
  }

  SUBCASE("x histogram passes a chi-square test") {
    // 30 interior bins plus the upper tail: 30 degrees of freedom.
    CHECK(chi_square(x, 0.0, 3.0, 30, bimodal_cdf, false) < 59.70306430442994);
  }
}

TEST_CASE("bimodal lambda read as scale") {
  Rng rng(4);
  paide::TaskOptions options;
  options.bimodal_lambda = paide::ExponentialParam::Scale;
  CHECK(std::abs(paide::gen_bimodal(kLarge, rng, options).inputs.mean() - 2.0) < 0.04);
}

TEST_CASE("generators are seed deterministic") {
  for (const char* name : {"hetero", "bimodal"}) {
    const auto task = SyntheticTask::from_name(name);
    Rng a(99), b(99), c(100);
    const Dataset da = task.generate(500, a);
    const Dataset db = task.generate(500, b);
    const Dataset dc = task.generate(500, c);
    CHECK(da.inputs == db.inputs);
    CHECK(da.targets == db.targets);
    CHECK(da.inputs != dc.inputs);
    CHECK(da.name == name);
  }
  CHECK_THROWS_AS(SyntheticTask::from_name("sine"), std::invalid_argument);
  Rng rng(0);
  CHECK_THROWS_AS(paide::gen_hetero(0, rng), std::invalid_argument);
}

TEST_CASE("dataset helpers") {
  Dataset d;
  d.append(Eigen::Vector2d(1, 2), Eigen::VectorXd::Constant(1, 3));
  d.append(Eigen::Vector2d(4, 5), Eigen::VectorXd::Constant(1, 6));
  CHECK(d.rows() == 2);
  CHECK_THROWS_AS(d.append(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(1)), std::invalid_argument);
  const Dataset s = d.subset({1});
  CHECK(s.inputs(0, 1) == 5);
  CHECK(s.targets(0, 0) == 6);
  CHECK_THROWS_AS(d.subset({2}), std::out_of_range);
  d.targets(0, 0) = NAN;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}

TEST_CASE("csv loading") {
  const auto path = temp_file("small.csv");
  write_text(path, "x0,x1,y0\n1.5,-2,3e-1\n0,0.25,7\n-1e3,4,5\n");
  const Dataset d = paide::load_csv(path, 2, 1);
  REQUIRE(d.rows() == 3);
  CHECK(d.inputs(0, 0) == 1.5);
  CHECK(d.inputs(0, 1) == -2.0);
  CHECK(d.targets(0, 0) == 0.3);
  CHECK(d.inputs(2, 0) == -1000.0);
  CHECK(d.targets(2, 0) == 5.0);

  SUBCASE("column order and CRLF") {
    write_text(path, "y0,x0\r\n1,2\r\n3,4\r\n");
    const Dataset r = paide::load_csv(path, 1, 1);
    CHECK(r.inputs(1, 0) == 4.0);
    CHECK(r.targets(1, 0) == 3.0);
  }

  SUBCASE("NaN cell names its line and column") {
    write_text(path, "x0,y0\n1,2\n3,NaN\n");
    try {
      paide::load_csv(path, 1, 1);
      FAIL("expected CsvError");
    } catch (const paide::CsvError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("line 3") != std::string::npos);
      CHECK(msg.find("column y0") != std::string::npos);
    }
  }

  SUBCASE("non-numeric cell") {
    write_text(path, "x0,y0\n1,abc\n");
    CHECK_THROWS_AS(paide::load_csv(path, 1, 1), paide::CsvError);
  }

  SUBCASE("missing column") {
    write_text(path, "x0,y0\n1,2\n");
    CHECK_THROWS_WITH_AS(paide::load_csv(path, 2, 1), doctest::Contains("missing column x1"), paide::CsvError);
  }

  SUBCASE("dimension mismatch") {
    write_text(path, "x0,x1,y0\n1,2,3\n");
    CHECK_THROWS_WITH_AS(paide::load_csv(path, 1, 1), doctest::Contains("dimension mismatch"), paide::CsvError);
    CHECK(paide::load_inputs_csv(path, 2).rows() == 1);
  }

  SUBCASE("ragged row") {
    write_text(path, "x0,y0\n1\n");
    CHECK_THROWS_AS(paide::load_csv(path, 1, 1), paide::CsvError);
  }

  CHECK_THROWS_AS(paide::load_csv(temp_file("does_not_exist.csv"), 1, 1), paide::CsvError);
  std::filesystem::remove(path);
}

TEST_CASE("csv round trip keeps every bit") {
  Rng rng(5);
  Dataset d = paide::gen_bimodal(200, rng);
  const auto first = temp_file("round1.csv");
  const auto second = temp_file("round2.csv");
  paide::write_csv(d, first);
  const Dataset back = paide::load_csv(first, 1, 1);
  CHECK(back.inputs == d.inputs);
  CHECK(back.targets == d.targets);
  paide::write_csv(back, second);
  std::ifstream a(first), b(second);
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  CHECK(paide::format_real(0.1) == "0.10000000000000001");
  std::filesystem::remove(first);
  std::filesystem::remove(second);
}

TEST_CASE("synthetic pools") {
  const auto task = SyntheticTask::from_name("hetero");
  Rng rng(8);
  paide::Pool pool = paide::make_pool(task, 10000, rng);
  CHECK(pool.size() == 10000);
  CHECK(!pool.has_source_rows());
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) labeled += pool.acquired(i) ? 1 : 0;
  CHECK(labeled == 0);

  const Eigen::VectorXd y = pool.acquire(17);
  CHECK(y.size() == 1);
  CHECK(pool.acquired(17));
  CHECK_THROWS_WITH_AS(pool.acquire(17), doctest::Contains("already acquired"), std::logic_error);
  CHECK_THROWS_AS(pool.acquire(10000), std::out_of_range);

  // Labels depend only on the seed and the candidate, not on acquisition order.
  Rng again(8);
  paide::Pool twin = paide::make_pool(task, 10000, again);
  CHECK(twin.candidates() == pool.candidates());
  twin.acquire(3);
  CHECK(twin.acquire(17) == y);
}

TEST_CASE("dataset pools") {
  Rng gen(1);
  const Dataset source = paide::gen_hetero(50, gen);

  SUBCASE("full-size pool is a permutation") {
    Rng rng(2);
    paide::Pool pool = paide::make_pool(source, 50, rng);
    std::set<std::size_t> rows;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      rows.insert(pool.source_row(i));
      const auto r = static_cast<Eigen::Index>(pool.source_row(i));
      CHECK(pool.candidate(i) == source.inputs.row(r).transpose());
      CHECK(pool.acquire(i) == source.targets.row(r).transpose());
    }
    CHECK(rows.size() == 50);
  }

  SUBCASE("used rows are skipped and exhaustion is reported") {
    std::vector<bool> used(50, false);
    for (std::size_t r = 0; r < 40; ++r) used[r] = true;
    Rng rng(2);
    paide::Pool pool = paide::make_pool(source, 10, rng, used);
    for (std::size_t i = 0; i < pool.size(); ++i) CHECK(pool.source_row(i) >= 40);
    CHECK_THROWS_WITH_AS(paide::make_pool(source, 11, rng, used), doctest::Contains("pool exhausted"),
                         std::runtime_error);
  }

  SUBCASE("deterministic given seed") {
    Rng a(6), b(6);
    const paide::Pool pa = paide::make_pool(source, 20, a);
    const paide::Pool pb = paide::make_pool(source, 20, b);
    CHECK(pa.candidates() == pb.candidates());
  }
}
