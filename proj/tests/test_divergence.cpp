#include "rlc/divergence.hpp"
#include "rlc/errors.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rlc;
using namespace rlc::testing;

TEST_CASE("distribution validation") {
  CHECK_NOTHROW(Distribution({0.25, 0.75}));
  CHECK_THROWS_AS(Distribution({0.5, 0.6}), InputError);
  CHECK_THROWS_AS(Distribution({-0.1, 1.1}), InputError);
  CHECK_THROWS_AS(Distribution({NAN, 1.0}), InputError);
  CHECK_THROWS_AS(Distribution({}), InputError);
  const auto d = Distribution::normalized({1.0, 3.0});
  CHECK(d[0] == doctest::Approx(0.25));
  CHECK_THROWS_AS(Distribution::normalized({0.0, 0.0}), InputError);
}

TEST_CASE("renyi divergence basic values") {
  const Distribution p({0.5, 0.5});
  const Distribution q({0.9, 0.1});
  SUBCASE("identical arguments give zero for every order") {
    for (double a : {-2.0, 0.0, 0.3, 1.0, 3.0}) CHECK(renyi_divergence(p, p, a) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("limits are the two KL directions") {
    CHECK(renyi_divergence(p, q, 1.0) == doctest::Approx(kl_divergence(p, q)).epsilon(1e-14));
    CHECK(renyi_divergence(p, q, 0.0) == doctest::Approx(kl_divergence(q, p)).epsilon(1e-14));
    CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1)));
  }
  SUBCASE("symmetric at one half") {
    CHECK(renyi_divergence(p, q, 0.5) == doctest::Approx(renyi_divergence(q, p, 0.5)).epsilon(1e-14));
  }
  SUBCASE("matches direct summation") {
    Rng rng(11);
    for (int k = 0; k < 50; ++k) {
      const auto a = random_distribution(rng, 5);
      const auto b = random_distribution(rng, 5);
      for (double alpha : {-1.5, -0.2, 0.4, 0.9, 2.5}) {
        CHECK(renyi_divergence(a, b, alpha) == doctest::Approx(naive_renyi(a, b, alpha)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("renyi support rules") {
  const std::vector<double> p{0.5, 0.5, 0.0};
  const std::vector<double> q{0.5, 0.0, 0.5};
  const std::vector<double> wide{0.4, 0.3, 0.3};
  SUBCASE("alpha >= 1 needs supp p inside supp q") {
    CHECK_NOTHROW(renyi_divergence(p, wide, 2.0));
    CHECK_THROWS_AS(renyi_divergence(wide, p, 2.0), SupportError);
    try {
      renyi_divergence(wide, p, 1.0);
    } catch (const SupportError& e) {
      CHECK(e.outcome() == 2);
    }
  }
  SUBCASE("alpha <= 0 needs supp q inside supp p") {
    CHECK_NOTHROW(renyi_divergence(wide, p, -1.0));
    CHECK_THROWS_AS(renyi_divergence(p, wide, -1.0), SupportError);
    CHECK_THROWS_AS(renyi_divergence(p, wide, 0.0), SupportError);
  }
  SUBCASE("0 < alpha < 1 only needs overlap") {
    CHECK(std::isfinite(renyi_divergence(p, q, 0.5)));
    CHECK_THROWS_AS(renyi_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}, 0.5),
                    SupportError);
  }
  CHECK_FALSE(try_renyi_divergence(wide, p, 2.0).has_value());
  CHECK(try_renyi_divergence(p, wide, 2.0).has_value());
}

TEST_CASE("renyi divergence stays finite for extreme ratios") {
  const std::vector<double> p{1.0 - 1e-300, 1e-300};
  const std::vector<double> q{1e-300, 1.0 - 1e-300};
  for (double a : {-3.0, -0.5, 0.5, 3.0}) {
    const double d = renyi_divergence(p, q, a);
    CHECK(std::isfinite(d));
    CHECK(d > 0.0);
  }
}

TEST_CASE("psi") {
  const Distribution u({0.5, 0.5});
  const std::vector<double> f{0.0, 1.0};
  CHECK(psi(u, f, 0.0) == doctest::Approx(0.5));
  CHECK(psi(u, f, 1.0) == doctest::Approx(std::log((1.0 + std::exp(1.0)) / 2.0)));
  CHECK(psi(u, f, -1.0) == doctest::Approx(-std::log((1.0 + std::exp(-1.0)) / 2.0)));
  SUBCASE("shift equivariance and monotonicity in alpha") {
    Rng rng(3);
    for (int k = 0; k < 100; ++k) {
      const auto pi = random_distribution(rng, 6);
      const auto g = random_vector(rng, 6, -5.0, 5.0);
      auto shifted = g;
      for (double& x : shifted) x += 7.25;
      double prev = -INFINITY;
      for (double a = -3.0; a <= 3.0; a += 0.25) {
        const double v = psi(pi, g, a);
        CHECK(psi(pi, shifted, a) == doctest::Approx(v + 7.25).epsilon(1e-12));
        CHECK(v >= prev - 1e-12);
        prev = v;
      }
    }
  }
  SUBCASE("large arguments do not overflow") {
    const std::vector<double> big{1e4, 2e4};
    CHECK(psi(u, big, 1.0) == doctest::Approx(2e4 - std::log(2.0)));
    CHECK(psi(u, big, -1.0) == doctest::Approx(1e4 + std::log(2.0)));
  }
}

TEST_CASE("variational minimizer reproduces the closed form") {
  Rng rng(5);
  for (double alpha : {-1.0, -0.5, 0.0, 0.3, 0.5, 1.0, 2.0}) {
    for (int k = 0; k < 20; ++k) {
      const Distribution pi0(random_distribution(rng, 4));
      const auto f = random_vector(rng, 4, -2.0, 2.0);
      const auto sol = variational_minimizer(pi0, f, alpha);
      const double target = psi(pi0, f, alpha - 1.0);
      CHECK(sol.value == doctest::Approx(target).epsilon(1e-12));
      const double achieved = renyi_divergence(pi0, sol.minimizer, alpha) + psi(sol.minimizer, f, alpha);
      CHECK(std::abs(achieved - target) <= 1e-10);
      // Minimiser is proportional to pi0 exp(-f), for every order.
      for (std::size_t i = 1; i < 4; ++i) {
        CHECK(std::log(sol.minimizer[i] / sol.minimizer[0]) ==
              doctest::Approx(std::log(pi0[i] / pi0[0]) - (f[i] - f[0])).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("variational minimum beats random perturbations") {
  Rng rng(8);
  const Distribution pi0(random_distribution(rng, 3));
  const auto f = random_vector(rng, 3, -1.0, 1.0);
  for (double alpha : {-1.0, 0.5, 2.0}) {
    const auto sol = variational_minimizer(pi0, f, alpha);
    for (int k = 0; k < 200; ++k) {
      const auto pi = random_distribution(rng, 3, 0.001);
      CHECK(renyi_divergence(pi0.probs(), pi, alpha) + psi(pi, f, alpha) >= sol.value - 1e-12);
    }
  }
}

TEST_CASE("gaussian closed form") {
  GaussianParams g1{Eigen::Vector2d(0.0, 1.0), Eigen::Matrix2d::Identity() * 2.0};
  GaussianParams g2{Eigen::Vector2d(1.0, -1.0), Eigen::Matrix2d::Identity() * 2.0};
  // d = (-1, 2), C^-1 = I / 2: d^T C^-1 d / 2 = 5 / 4.
  for (double a : {-0.5, 0.3, 2.0}) CHECK(gaussian_renyi(g1, g2, a) == doctest::Approx(1.25));
  GaussianParams bad = g2;
  bad.covariance(0, 0) = 3.0;
  CHECK_THROWS_AS(gaussian_renyi(g1, bad, 0.5), InputError);
  GaussianParams singular = g1;
  singular.covariance = Eigen::Matrix2d::Zero();
  CHECK_THROWS_AS(gaussian_renyi(singular, singular, 0.5), InputError);
}
