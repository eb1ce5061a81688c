#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "cohertrace/errors.hpp"
#include "cohertrace/stats.hpp"
#include "support.hpp"

using namespace cohertrace;

TEST_SUITE("stats") {

TEST_CASE("average ranks") {
  CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
  CHECK(average_ranks(std::vector<double>{1, 1, 1}) == std::vector<double>{2, 2, 2});
}

TEST_CASE("perfect monotone and inverse") {
  CHECK(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{10, 20, 30}) == 1.0);
  CHECK(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{30, 20, 10}) == -1.0);
}

TEST_CASE("tied example matches oracle") {
  const std::vector<double> x{1, 2, 2, 3}, y{2, 1, 3, 3};
  // Ranks x = [1, 2.5, 2.5, 4], y = [2, 1, 3.5, 3.5] -> rho = 2.25 / sqrt(4.5 * 4.5).
  CHECK(spearman_rho(x, y) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::fabs(spearman_rho(x, y) - static_cast<double>(testing::oracle_spearman(x, y))) <= 1e-12);
}

TEST_CASE("spearman matches rank-then-Pearson oracle on tied data") {
  std::mt19937_64 rng(1);
  int checked = 0;
  while (checked < 1000) {
    const std::size_t n = 3 + rng() % 8;
    const auto x = testing::random_tied(rng, n, 4);
    const auto y = testing::random_tied(rng, n, 5);
    double rho;
    try {
      rho = spearman_rho(x, y);
    } catch (const DegenerateInput&) {
      continue;
    }
    CHECK(std::fabs(rho - static_cast<double>(testing::oracle_spearman(x, y))) <= 1e-12);
    CHECK(spearman_rho(y, x) == doctest::Approx(rho).epsilon(1e-15));
    ++checked;
  }
}

TEST_CASE("rank invariance under increasing transforms") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto x = testing::random_tied(rng, 12, 6);
    const auto y = testing::random_tied(rng, 12, 7);
    std::vector<double> tx;
    for (double v : x) tx.push_back(std::exp(v) * 3 + 1);
    try {
      CHECK(spearman_rho(tx, y) == spearman_rho(x, y));
    } catch (const DegenerateInput&) {
    }
  }
}

TEST_CASE("input errors") {
  CHECK_THROWS_AS(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), LengthMismatch);
  CHECK_THROWS_AS(spearman_rho(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateInput);
  CHECK_THROWS_AS(spearman_rho(std::vector<double>{1, 2}, std::vector<double>{1, 2}), DegenerateInput);
}

TEST_CASE("exact p for a monotone n=5 sample is 2/120") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const auto r = spearman_test(x, x);
  CHECK(r.method == PValueMethod::ExactPermutation);
  CHECK(r.p_value == 2.0 / 120.0);
  CHECK(r.stars == "**");
}

TEST_CASE("exact p matches full enumeration") {
  std::mt19937_64 rng(3);
  int checked = 0;
  while (checked < 100) {
    const std::size_t n = 3 + rng() % 5;
    const auto x = testing::random_tied(rng, n, 5);
    const auto y = testing::random_tied(rng, n, 5);
    try {
      const auto r = spearman_test(x, y);
      REQUIRE(r.method == PValueMethod::ExactPermutation);
      CHECK(r.p_value == testing::oracle_exact_p(x, y));
      ++checked;
    } catch (const DegenerateInput&) {
    }
  }
}

TEST_CASE("exact and t-approximation agree at n=8") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int seed = 0; seed < 100; ++seed) {
    std::vector<double> x(8), y(8);
    for (std::size_t i = 0; i < 8; ++i) {
      x[i] = g(rng);
      y[i] = 0.5 * x[i] + g(rng);
    }
    const double rho = spearman_rho(x, y);
    const auto exact = spearman_pvalue(rho, x, y);
    CHECK(exact.method == PValueMethod::ExactPermutation);
    const double t = std::fabs(rho) * std::sqrt(6.0 / (1.0 - rho * rho));
    const double approx = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(6.0), t));
    CHECK(std::fabs(exact.p - approx) <= 0.05);
  }
}

TEST_CASE("t-approximation for large n") {
  std::mt19937_64 rng(5);
  std::vector<double> x(200), y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    x[i] = static_cast<double>(i);
    y[i] = static_cast<double>(i % 2);
  }
  const auto r = spearman_test(x, y);
  CHECK(r.method == PValueMethod::TApprox);
  CHECK(r.p_value > 0.5);
  const auto perfect = spearman_test(x, x);
  CHECK(perfect.p_value == 0.0);
  CHECK(perfect.stars == "***");
}

TEST_CASE("significance stars") {
  CHECK(significance_stars(0.005) == "***");
  CHECK(significance_stars(0.01) == "**");
  CHECK(significance_stars(0.049) == "**");
  CHECK(significance_stars(0.05) == "*");
  CHECK(significance_stars(0.0999) == "*");
  CHECK(significance_stars(0.1) == "");
  CHECK(significance_stars(0.2) == "");
}

TEST_CASE("weighted kappa") {
  const std::vector<int> cats{0, 1, 2, 3, 4};
  const std::vector<int> a{0, 1, 2, 3, 4, 2};
  CHECK(weighted_kappa(a, a, cats) == 1.0);
  CHECK(weighted_kappa(a, a, cats, KappaWeighting::Quadratic) == 1.0);

  // 2x2: O = [[.25,.25],[.25,.25]], marginals .5/.5 -> E equal -> kappa 0.
  const std::vector<int> r1{0, 0, 1, 1}, r2{0, 1, 0, 1}, two{0, 1};
  CHECK(std::fabs(weighted_kappa(r1, r2, two) - 0.0) <= 1e-12);

  // 10 items: a=4 (0,0), b=1 (0,1), c=2 (1,0), d=3 (1,1); po=.7, pe=.5 -> .4.
  const std::vector<int> s1{0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, s2{0, 0, 0, 0, 1, 0, 0, 1, 1, 1};
  CHECK(std::fabs(weighted_kappa(s1, s2, two) - 0.4) <= 1e-12);
  CHECK(weighted_kappa(s1, s2, two) == weighted_kappa(s2, s1, two));
  CHECK(weighted_kappa(s1, s2, two, KappaWeighting::Quadratic) == weighted_kappa(s1, s2, two));

  const std::vector<int> c{2, 2, 2};
  CHECK_THROWS_AS(weighted_kappa(c, c, cats), UndefinedKappa);
  CHECK_THROWS_AS(weighted_kappa(r1, s1, two), LengthMismatch);
  CHECK_THROWS_AS(weighted_kappa(r1, r2, std::vector<int>{0}), UndefinedKappa);
}

TEST_CASE("profile bands") {
  WindowProfile p1{WindowSpec(4), {1, 2, 3, 4, 5}, {}, false};
  WindowProfile p2{WindowSpec(4), {1, 2, 3, 4, 5, 6, 7, 8, 9}, {}, false};
  const std::vector<WindowProfile> same{p1, p1};
  const std::vector<std::string> g{"x", "x"};
  const auto flat = profile_band(same, g);
  for (const auto& band : flat.at("x")) {
    CHECK(band.ci_low == band.mean);
    CHECK(band.ci_high == band.mean);
  }
  const std::vector<WindowProfile> ragged{p1, p2};
  const auto bands = profile_band(ragged, g).at("x");
  REQUIRE(bands.size() == 9);
  CHECK(bands[4].n == 2);
  for (std::size_t i = 5; i < 9; ++i) {
    CHECK(bands[i].n == 1);
    CHECK_FALSE(bands[i].ci_low.has_value());
  }

  WindowProfile p3{WindowSpec(8), {1}, {}, false};
  const std::vector<WindowProfile> mixed{p1, p3};
  CHECK_THROWS_AS(profile_band(mixed, g), MixedWindowSizes);

  WindowProfile q{WindowSpec(4), {2, 4}, {}, false};
  WindowProfile r{WindowSpec(4), {4, 8}, {}, false};
  const std::vector<WindowProfile> two{q, r};
  const auto b = profile_band(two, g).at("x");
  // mean 3, sd sqrt(2), half-width 1.96 * sqrt(2) / sqrt(2) = 1.96.
  CHECK(b[0].mean == 3.0);
  CHECK(*b[0].ci_low == doctest::Approx(3.0 - 1.96));
  CHECK(*b[0].ci_high == doctest::Approx(3.0 + 1.96));
}

}
