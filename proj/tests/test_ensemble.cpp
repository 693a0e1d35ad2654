#include "doctest.h"
#include "oracles.hpp"
#include "paide/ensemble.hpp"

#include <limits>
#include <random>

using paide::Distance;
using paide::Gaussiand;
using paide::McConfig;
using paide::Mixtured;
using Eigen::VectorXd;

namespace {

Gaussiand normal1(double mean, double var) {
  return Gaussiand::diagonal(VectorXd::Constant(1, mean), VectorXd::Constant(1, var));
}

Mixtured random_mixture(std::mt19937_64& rng, int m, int dim, double spread = 1.0) {
  std::normal_distribution<double> mean(0.0, spread);
  std::uniform_real_distribution<double> var(0.5, 2.0);
  std::vector<Gaussiand> comps;
  for (int j = 0; j < m; ++j) {
    VectorXd mu(dim), v(dim);
    for (int k = 0; k < dim; ++k) {
      mu[k] = mean(rng);
      v[k] = var(rng);
    }
    comps.push_back(Gaussiand::diagonal(mu, v));
  }
  return Mixtured::uniform(std::move(comps));
}

Mixtured identical(int m, const Gaussiand& g) {
  return Mixtured::uniform(std::vector<Gaussiand>(static_cast<std::size_t>(m), g));
}

Mixtured spread_out(int m, double separation) {
  std::vector<Gaussiand> comps;
  for (int j = 0; j < m; ++j) comps.push_back(normal1(separation * j, 1.0));
  return Mixtured::uniform(std::move(comps));
}

}  // namespace

TEST_CASE("mixture validation") {
  const auto g = normal1(0.0, 1.0);
  CHECK_THROWS_AS(Mixtured({}, VectorXd()), std::invalid_argument);
  CHECK_THROWS_AS(Mixtured({g, g}, VectorXd::Constant(2, 0.4)), std::invalid_argument);
  CHECK_THROWS_AS(Mixtured({g, g}, (VectorXd(2) << 1.5, -0.5).finished()), std::invalid_argument);
  CHECK_THROWS_AS(
      Mixtured({g, Gaussiand::diagonal(VectorXd::Zero(2), VectorXd::Ones(2))}, VectorXd::Constant(2, 0.5)),
      std::invalid_argument);
}

TEST_CASE("mixture log density") {
  const auto g = normal1(0.3, 2.0);
  const VectorXd y = VectorXd::Constant(1, 1.1);
  CHECK(paide::mixture_log_density(Mixtured::uniform({g}), y) == paide::log_density(g, y));
  CHECK(paide::mixture_log_density(identical(2, g), y) ==
        doctest::Approx(paide::log_density(g, y)).epsilon(1e-14));

  const Mixtured far = Mixtured::uniform({normal1(0.0, 1.0), normal1(10.0, 1.0)});
  CHECK(paide::mixture_log_density(far, VectorXd::Zero(1)) ==
        doctest::Approx(-1.612085713764618).epsilon(1e-14));

  SUBCASE("no underflow far in the tails") {
    const double v = paide::mixture_log_density(far, VectorXd::Constant(1, 300.0));
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(std::log(0.5) + paide::log_density(normal1(10.0, 1.0),
                                                                  VectorXd::Constant(1, 300.0))));
  }
}

TEST_CASE("weight and aleatoric entropy") {
  const auto g = normal1(0.0, 1.0);
  CHECK(paide::weight_entropy(identical(5, g)) == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  CHECK(paide::weight_entropy(Mixtured({g, g, g}, (VectorXd(3) << 1.0, 0.0, 0.0).finished())) == 0.0);
  CHECK(paide::weight_entropy(Mixtured({g, g, g}, (VectorXd(3) << 0.5, 0.25, 0.25).finished())) ==
        doctest::Approx(1.0397207708399179).epsilon(1e-14));

  CHECK(paide::aleatoric_entropy(identical(5, g)) == doctest::Approx(1.4189385332046727).epsilon(1e-14));
  CHECK(paide::aleatoric_entropy(Mixtured({g, normal1(0.0, 100.0)}, (VectorXd(2) << 1.0, 0.0).finished())) ==
        doctest::Approx(1.4189385332046727).epsilon(1e-14));
  const double half = 0.5 * (oracle::entropy({0.0, 1.0}) + oracle::entropy({0.0, 4.0}));
  const double closed = paide::aleatoric_entropy(Mixtured::uniform({g, normal1(0.0, 4.0)}));
  CHECK(closed == doctest::Approx(1.7655121234846454).epsilon(1e-13));
  CHECK(closed == doctest::Approx(half).epsilon(1e-9));
}

TEST_CASE("paide total entropy") {
  const auto g = normal1(0.0, 1.0);
  CHECK(paide::paide_total_entropy(identical(4, g), Distance::kl()) ==
        paide::aleatoric_entropy(identical(4, g)));

  const Mixtured far = spread_out(3, 1e6);
  CHECK(std::abs(paide::paide_total_entropy(far, Distance::kl()) -
                 (paide::aleatoric_entropy(far) + paide::weight_entropy(far))) < 1e-9);

  // -ln(1/2 (1 + exp(-1/2))) added to the shared component entropy.
  const Mixtured pair = Mixtured::uniform({g, normal1(1.0, 1.0)});
  const double expected = 1.4189385332046727 - std::log(0.5 * (1.0 + std::exp(-0.5)));
  CHECK(paide::paide_total_entropy(pair, Distance::kl()) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(paide::paide_total_entropy(pair, Distance::kl()) ==
        doctest::Approx(1.6380087295845114).epsilon(1e-13));
}

TEST_CASE("epistemic paide limits") {
  const auto g = normal1(0.0, 1.0);
  CHECK(paide::epistemic_paide(identical(5, g), Distance::kl()) == 0.0);
  CHECK(paide::epistemic_paide(identical(5, g), Distance::bhattacharyya()) == 0.0);
  CHECK(std::abs(paide::epistemic_paide(spread_out(2, 1e6), Distance::kl()) - std::log(2.0)) < 1e-9);
  CHECK(std::abs(paide::epistemic_paide(spread_out(5, 1e6), Distance::bhattacharyya()) -
                 std::log(5.0)) < 1e-9);
}

TEST_CASE("high-dimensional distances do not underflow the inner sum") {
  std::vector<Gaussiand> comps;
  for (int j = 0; j < 4; ++j) {
    comps.push_back(Gaussiand::diagonal(VectorXd::Constant(300, 10.0 * j), VectorXd::Ones(300)));
  }
  const Mixtured mix = Mixtured::uniform(comps);
  CHECK(paide::kl_divergence(comps[0], comps[1]) > 700.0);
  CHECK(paide::epistemic_paide(mix, Distance::kl()) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("aggregation with injected extreme distances") {
  std::mt19937_64 rng(17);
  const Mixtured mix = random_mixture(rng, 4, 2);
  const double zero = paide::pairwise_epistemic(mix, [](std::size_t, std::size_t) { return 0.0; }, false);
  CHECK(paide::aleatoric_entropy(mix) + zero == paide::aleatoric_entropy(mix));
  const double inf = paide::pairwise_epistemic(
      mix, [](std::size_t, std::size_t) { return std::numeric_limits<double>::infinity(); }, false);
  CHECK(inf == doctest::Approx(paide::weight_entropy(mix)).epsilon(1e-15));

  SUBCASE("symmetric distances evaluate each pair once") {
    int calls = 0;
    paide::pairwise_epistemic(mix, [&](std::size_t i, std::size_t j) { ++calls; CHECK(i < j); return 1.0; }, true);
    CHECK(calls == 6);
    calls = 0;
    paide::pairwise_epistemic(mix, [&](std::size_t i, std::size_t j) { ++calls; CHECK(i != j); return 1.0; }, false);
    CHECK(calls == 12);
  }
  SUBCASE("zero-weight members are ignored") {
    const auto g = normal1(0.0, 1.0);
    const Mixtured m({g, normal1(50.0, 1.0)}, (VectorXd(2) << 1.0, 0.0).finished());
    CHECK(paide::epistemic_paide(m, Distance::kl()) == 0.0);
  }
}

TEST_CASE("epistemic estimator invariants on random mixtures") {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 40; ++t) {
    const int dim = 1 + t % 3;
    const Mixtured mix = random_mixture(rng, 2 + t % 5, dim, 0.3 + 0.1 * t);
    const double kl = paide::epistemic_paide(mix, Distance::kl());
    const double bh = paide::epistemic_paide(mix, Distance::bhattacharyya());
    CHECK(bh <= kl + 1e-15);
    CHECK(bh >= 0.0);
    CHECK(kl <= paide::weight_entropy(mix) + 1e-12);
    CHECK(std::abs(paide::paide_total_entropy(mix, Distance::kl()) - paide::aleatoric_entropy(mix) - kl) < 1e-12);

    SUBCASE("scaling separations never decreases the estimate") {
      double prev = -1.0;
      for (double s : {1.0, 1.5, 2.0, 4.0, 8.0}) {
        std::vector<Gaussiand> scaled;
        for (const auto& c : mix.components()) {
          scaled.push_back(Gaussiand::diagonal(s * c.mean(), VectorXd::Ones(dim)));
        }
        const double v = paide::epistemic_paide(Mixtured::uniform(scaled), Distance::kl());
        CHECK(v >= prev);
        prev = v;
      }
    }
  }
}

TEST_CASE("monte carlo total entropy") {
  SUBCASE("single gaussian") {
    const auto est = paide::mc_total_entropy(Mixtured::uniform({normal1(0.0, 1.0)}), McConfig{100000, 1});
    CHECK(std::abs(est.value - 1.4189385332046727) < 3.0 * est.standard_error);
  }
  SUBCASE("seed determinism") {
    std::mt19937_64 rng(8);
    const Mixtured mix = random_mixture(rng, 3, 2);
    const auto a = paide::mc_total_entropy(mix, McConfig{500, 9});
    const auto b = paide::mc_total_entropy(mix, McConfig{500, 9});
    CHECK(a.value == b.value);
    CHECK(a.standard_error == b.standard_error);
  }
  SUBCASE("identical-component mixture matches its single component") {
    const auto g = normal1(0.4, 1.7);
    const auto one = paide::mc_total_entropy(Mixtured::uniform({g}), McConfig{2000, 5});
    const auto many = paide::mc_total_entropy(identical(5, g), McConfig{2000, 5});
    CHECK(std::abs(one.value - many.value) < 1e-12);
  }
  SUBCASE("two separated components match quadrature") {
    const Mixtured mix = Mixtured::uniform({normal1(0.0, 1.0), normal1(6.0, 1.0)});
    const double truth = oracle::mixture_entropy({{0.0, 1.0}, {6.0, 1.0}}, {0.5, 0.5});
    CHECK(truth == doctest::Approx(2.1082364662335262).epsilon(1e-9));
    const auto est = paide::mc_total_entropy(mix, McConfig{200000, 3});
    CHECK(std::abs(est.value - truth) < 3.0 * est.standard_error);

    const auto epi = paide::epistemic_mc(mix, McConfig{200000, 3});
    CHECK(epi.standard_error == est.standard_error);
    CHECK(std::abs(epi.value - std::log(2.0)) < 0.01);
  }
  SUBCASE("reseeded mean matches quadrature on a 1D mixture") {
    const Mixtured mix({normal1(-1.0, 0.5), normal1(1.5, 2.0), normal1(0.2, 0.3)},
                       (VectorXd(3) << 0.2, 0.5, 0.3).finished());
    const double truth = oracle::mixture_entropy({{-1.0, 0.5}, {1.5, 2.0}, {0.2, 0.3}}, {0.2, 0.5, 0.3});
    double mean = 0.0;
    double var_sum = 0.0;
    const int runs = 50;
    for (int r = 0; r < runs; ++r) {
      const auto est = paide::mc_total_entropy(mix, McConfig{4000, static_cast<std::uint64_t>(100 + r)});
      mean += est.value;
      var_sum += est.standard_error * est.standard_error;
    }
    mean /= runs;
    const double pooled_se = std::sqrt(var_sum) / runs;
    CHECK(std::abs(mean - truth) < 3.0 * pooled_se);
  }
}

TEST_CASE("epistemic mc") {
  SUBCASE("identical components") {
    const auto est = paide::epistemic_mc(identical(5, normal1(1.0, 2.0)), McConfig{10000, 4});
    CHECK(std::abs(est.value) < 3.0 * est.standard_error + 1e-12);
  }
  SUBCASE("sandwiched between the pairwise estimates") {
    std::mt19937_64 rng(77);
    for (int t = 0; t < 5; ++t) {
      const Mixtured mix = random_mixture(rng, 5, 2);
      const auto mc = paide::epistemic_mc(mix, McConfig{50000, static_cast<std::uint64_t>(t)});
      CHECK(paide::epistemic_paide(mix, Distance::bhattacharyya()) <= mc.value + 3.0 * mc.standard_error);
      CHECK(mc.value - 3.0 * mc.standard_error <= paide::epistemic_paide(mix, Distance::kl()));
    }
  }
}
