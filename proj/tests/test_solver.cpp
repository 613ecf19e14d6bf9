#include "rlc/analysis.hpp"
#include "rlc/errors.hpp"
#include "rlc/solver.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rlc;
using namespace rlc::testing;

TEST_CASE("finite horizon hand examples") {
  SUBCASE("T = 0 returns the boundary") {
    const ProblemSpec s(StateSpace{2, {}}, uniform2(), CostModel({0.3, 0.4}, {1.0, 2.0}), 0.5, FiniteHorizon{0});
    const auto sol = solve_fh(s);
    CHECK(sol.value.stages.size() == 1);
    CHECK(sol.value.stages[0] == Vector{1.0, 2.0});
  }
  SUBCASE("two states, one step, alpha = 0") {
    const ProblemSpec s(StateSpace{2, {}}, uniform2(), CostModel({0.0, 0.0}, {0.0, 1.0}), 0.0, FiniteHorizon{1});
    const auto v0 = solve_fh(s).value.stages[0];
    const double expect = -std::log((1.0 + std::exp(-1.0)) / 2.0);
    CHECK(v0[0] == doctest::Approx(expect).epsilon(1e-15));
    CHECK(v0[1] == doctest::Approx(expect).epsilon(1e-15));
  }
  SUBCASE("alpha = 1 is the plain expectation recursion") {
    const ProblemSpec s(StateSpace{2, {}}, uniform2(), CostModel({0.5, 0.0}, {0.0, 1.0}), 1.0, FiniteHorizon{2});
    const auto v = solve_fh(s).value;
    CHECK(v.stages[1][0] == doctest::Approx(1.0));
    CHECK(v.stages[0][0] == doctest::Approx(0.5 + 0.5 * (1.0 + 0.5)));
  }
}

TEST_CASE("finite horizon against a brute-force Bellman oracle") {
  // Exhaustive minimisation over a simplex grid per state and stage; the
  // grid can only overestimate the true minimum.
  Rng rng(17);
  auto spec = random_fh(rng, 5, 3, 0.5);
  // Restrict rows to at most 3 entries for an affordable grid.
  std::vector<std::vector<std::size_t>> cols(5);
  std::vector<std::vector<double>> probs(5);
  for (std::size_t i = 0; i < 5; ++i) {
    cols[i] = {i, (i + 1) % 5, (i + 3) % 5};
    std::sort(cols[i].begin(), cols[i].end());
    probs[i] = random_distribution(rng, 3);
  }
  spec = spec.with_passive(StochasticMatrix::from_rows(cols, probs));
  const auto sol = solve_fh(spec).value;

  Vector next = spec.final_cost();
  for (std::size_t t = 3; t-- > 0;) {
    Vector cur(5);
    for (std::size_t x = 0; x < 5; ++x) {
      const auto row = spec.passive().row(x);
      std::vector<double> f;
      for (auto c : row.cols) f.push_back(next[c]);
      cur[x] = spec.cost_at(t)[x] + brute_force_variational(row.probs, f, 0.5, 200);
    }
    for (std::size_t x = 0; x < 5; ++x) {
      CHECK(cur[x] >= sol.stages[t][x] - 1e-12);
      CHECK(cur[x] - sol.stages[t][x] <= 2e-3);
    }
    next = sol.stages[t];  // continue from the exact stage to isolate per-stage slack
  }
}

TEST_CASE("first exit closed form") {
  for (double p : {0.1, 0.5, 0.9}) {
    for (double alpha : {-1.0, 0.0, 0.5, 1.0}) {
      const auto spec = exit_fixture(p, alpha);
      const auto sol = solve_fe(spec);
      CHECK(sol.value.values()[0] == doctest::Approx(exit_fixture_value(p, alpha)).epsilon(1e-11));
      CHECK(sol.value.values()[1] == 0.0);
      if (alpha == 0.0) {
        const double z = std::exp(-1.0) * p / (1.0 - std::exp(-1.0) * (1.0 - p));
        CHECK(sol.z.values()[0] == doctest::Approx(z).epsilon(1e-11));
      }
    }
  }
}

TEST_CASE("first exit against a dense direct solve") {
  Rng rng(4);
  for (double alpha : {-0.5, 0.0, 0.5}) {
    const auto spec = random_fe(rng, 15, alpha, 2);
    const auto sol = solve_fe(spec);
    const auto z = direct_fe_z(spec);
    CHECK(max_rel_diff(sol.z.values(), z) < 1e-10);
    for (auto t : spec.terminal_states()) CHECK(sol.value.values()[t] == spec.final_cost()[t]);
  }
}

TEST_CASE("first exit errors") {
  SUBCASE("unreachable terminal set") {
    const auto stuck = StochasticMatrix::from_rows({{0}, {1}}, {{1.0}, {1.0}});
    const ProblemSpec s(StateSpace{2, {}}, stuck, CostModel({1.0, 0.0}), 0.5, FirstExit{{1}});
    CHECK_THROWS_AS(solve_fe(s), InputError);
  }
  SUBCASE("negative cost with a slow exit diverges") {
    auto passive = StochasticMatrix::from_rows({{0, 1}, {1}}, {{0.99, 0.01}, {1.0}});
    const ProblemSpec s(StateSpace{2, {}}, passive, CostModel({-1.0, 0.0}, {0.0, 0.0}), 0.0, FirstExit{{1}});
    SolverOptions o;
    o.divergence_window = 50;
    try {
      solve_fe(s, o);
      FAIL("expected divergence");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("q >= 0, alpha <= 1") != std::string::npos);
    }
  }
  SUBCASE("alpha > 1 with a fast exit still converges, with a warning") {
    const auto sol = solve_fe(exit_fixture(0.9, 1.5));
    CHECK_FALSE(sol.report.warnings.empty());
    CHECK(sol.value.values()[0] == doctest::Approx(exit_fixture_value(0.9, 1.5)).epsilon(1e-10));
  }
}

TEST_CASE("infinite horizon") {
  SUBCASE("constant cost") {
    Rng rng(2);
    auto spec = random_ih(rng, 10, 0.5);
    spec = spec.with_costs(CostModel(Vector(10, 0.4)));
    for (double alpha : {-0.5, 0.5, 1.0, 2.0}) {
      const auto sol = solve_ih(spec.with_alpha(alpha));
      CHECK(sol.report.average_cost == doctest::Approx(0.4).epsilon(1e-12));
      for (double v : sol.value.values()) CHECK(std::abs(v) < 1e-10);
    }
  }
  SUBCASE("2x2 eigen closed form") {
    const ProblemSpec s(StateSpace{2, {}}, uniform2(), CostModel({0.0, 1.0}), 0.5, InfiniteHorizon{});
    const auto sol = solve_ih(s);
    // M = diag(exp(-q/2)) * 0.5 * ones: rank one, rho = (1 + e^-1/2) / 2,
    // eigenvector proportional to diag(exp(-q/2)) 1.
    const double rho = (1.0 + std::exp(-0.5)) / 2.0;
    CHECK(sol.report.spectral_estimate() == doctest::Approx(rho).epsilon(1e-13));
    CHECK(sol.report.average_cost == doctest::Approx(-2.0 * std::log(rho)).epsilon(1e-12));
    CHECK(sol.report.average_cost == doctest::Approx(sol.report.log_spectral_estimate / -0.5).epsilon(1e-15));
    CHECK(sol.value.values()[0] == 0.0);
    CHECK(sol.value.values()[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("alpha = 1 uses sum v = 0") {
    Rng rng(9);
    const auto sol = solve_ih(random_ih(rng, 12, 1.0));
    double s = 0.0;
    for (double v : sol.value.values()) s += v;
    CHECK(std::abs(s) < 1e-12);
    CHECK(sol.report.final_residual < 1e-12);
  }
  SUBCASE("alpha near 0 is continuous with the alpha = 0 branch") {
    Rng rng(31);
    const auto spec = random_ih(rng, 20, 0.0);
    const auto v0 = solve_ih(spec).value.values();
    const auto v1 = solve_ih(spec.with_alpha(1e-6)).value.values();
    CHECK(max_abs_diff(v0, v1) < 1e-4);
  }
  SUBCASE("reducible chains are rejected") {
    const auto split = StochasticMatrix::from_rows({{0}, {1}}, {{1.0}, {1.0}});
    const ProblemSpec s(StateSpace{2, {}}, split, CostModel({0.0, 1.0}), 0.5, InfiniteHorizon{});
    CHECK_THROWS_AS(solve_ih(s), InputError);
  }
  SUBCASE("non-convergence is reported") {
    Rng rng(5);
    SolverOptions o;
    o.max_iter = 3;
    o.refine_after = 0;
    CHECK_THROWS_AS(solve_ih(random_ih(rng, 20, 0.5), o), NumericalError);
  }
  SUBCASE("shift-invert refinement matches plain power iteration") {
    Rng rng(12);
    const auto spec = random_ih(rng, 30, -0.7);
    SolverOptions plain;
    plain.refine_after = 0;
    SolverOptions fast;
    fast.refine_after = 5;
    const auto a = solve_ih(spec, plain);
    const auto b = solve_ih(spec, fast);
    CHECK(b.report.refinement_steps > 0);
    CHECK(max_abs_diff(a.value.values(), b.value.values()) < 1e-10);
    CHECK(a.report.average_cost == doctest::Approx(b.report.average_cost).epsilon(1e-12));
  }
}

TEST_CASE("bellman residual and transform consistency") {
  Rng rng(23);
  for (double alpha : {-0.5, 0.0, 0.5, 1.0, 1.5}) {
    const auto fh = random_fh(rng, 30, 10, alpha, true);
    const auto sfh = solve_fh(fh);
    CHECK(bellman_residual(fh, sfh.value) <= 1e-10);
    const auto ih = random_ih(rng, 30, alpha);
    const auto sih = solve_ih(ih);
    CHECK(bellman_residual(ih, sih.value, sih.report.average_cost) <= 1e-10);
    if (alpha <= 1.0) {
      const auto fe = random_fe(rng, 30, alpha, 3);
      CHECK(bellman_residual(fe, solve_fe(fe).value) <= 1e-10);
    }
    if (alpha != 1.0) {
      for (std::size_t t = 0; t < sfh.z.log_stages.size(); ++t) {
        const auto z = sfh.z.values(t);
        for (std::size_t x = 0; x < z.size(); ++x) {
          CHECK(z[x] == doctest::Approx(std::exp((alpha - 1.0) * sfh.value.stages[t][x])).epsilon(1e-10));
          CHECK(z[x] > 0.0);
        }
      }
    }
  }
}

TEST_CASE("policy extraction") {
  const ProblemSpec s(StateSpace{2, {}}, uniform2(), CostModel({0.0, 0.0}), 0.5, InfiniteHorizon{});
  const auto p = extract_policy(s, std::vector<double>{0.0, std::log(3.0)});
  CHECK(p.kernel.at(0, 0) == doctest::Approx(0.75));
  CHECK(p.kernel.at(0, 1) == doctest::Approx(0.25));
  CHECK(extract_policy(s, std::vector<double>{2.0, 2.0}).kernel == s.passive());

  SUBCASE("one-step optimality of the extracted policy") {
    Rng rng(44);
    for (double alpha : {-1.0, 0.3, 2.0}) {
      const auto spec = random_fe(rng, 12, alpha > 1 ? 0.9 : alpha, 2).with_alpha(alpha);
      const auto v = (alpha > 1 ? solve_fe(spec.with_alpha(0.9)) : solve_fe(spec)).value.values();
      const auto pol = extract_policy(spec, v);
      for (std::size_t x = 0; x < 12; ++x) {
        const auto row = spec.passive().row(x);
        std::vector<double> u, f;
        for (std::size_t k = 0; k < row.size(); ++k) {
          u.push_back(pol.kernel.at(x, row.cols[k]));
          f.push_back(v[row.cols[k]]);
        }
        const double lhs = renyi_divergence(row.probs, u, alpha) + psi(u, f, alpha);
        CHECK(std::abs(lhs - psi(row.probs, f, alpha - 1.0)) <= 1e-10);
      }
    }
  }
}

TEST_CASE("shift covariance") {
  Rng rng(50);
  const auto fh = random_fh(rng, 8, 4, 0.7);
  const double c = 0.375;
  auto shifted_q = fh.costs().running();
  for (double& x : shifted_q) x += c;
  auto shifted_f = fh.final_cost();
  for (double& x : shifted_f) x += c;
  const auto fh2 = fh.with_costs(CostModel(shifted_q, shifted_f));
  const auto a = solve_fh(fh).value;
  const auto b = solve_fh(fh2).value;
  for (std::size_t x = 0; x < 8; ++x) CHECK(b.stages[0][x] == doctest::Approx(a.stages[0][x] + 5 * c).epsilon(1e-12));
  const auto pa = extract_policies(fh, a);
  const auto pb = extract_policies(fh2, b);
  for (std::size_t t = 0; t < pa.size(); ++t) {
    for (const auto& tr : pa[t].kernel.triplets()) CHECK(pb[t].kernel.at(tr.from, tr.to) == doctest::Approx(tr.prob).epsilon(1e-12));
  }

  const auto ih = random_ih(rng, 8, -0.4);
  auto q = ih.costs().running();
  for (double& x : q) x += c;
  const auto s1 = solve_ih(ih);
  const auto s2 = solve_ih(ih.with_costs(CostModel(q)));
  CHECK(s2.report.average_cost == doctest::Approx(s1.report.average_cost + c).epsilon(1e-12));
}

TEST_CASE("monotone in alpha") {
  Rng rng(61);
  const auto fh = random_fh(rng, 10, 5, 0.0);
  Vector prev(10, -INFINITY);
  for (double alpha = -2.0; alpha <= 2.0; alpha += 0.25) {
    const auto v0 = solve_fh(fh.with_alpha(alpha)).value.stages[0];
    for (std::size_t x = 0; x < 10; ++x) CHECK(v0[x] >= prev[x] - 1e-9);
    prev = v0;
  }
}

TEST_CASE("policy evaluation") {
  Rng rng(70);
  SUBCASE("policy-iteration identity") {
    for (double theta : {-0.5, 0.5, 1.0, 2.0}) {
      const auto spec = random_fh(rng, 10, 6, theta, true);
      const Policy passive{spec.passive(), theta};
      const auto ev = evaluate_policy(spec, passive, theta - 1.0);
      const auto opt = solve_fh(spec).value;
      for (std::size_t t = 0; t <= 6; ++t) CHECK(max_abs_diff(ev.stages[t], opt.stages[t]) <= 1e-12);
    }
  }
  SUBCASE("optimal policy evaluated at alpha reproduces the optimum") {
    const auto spec = random_fh(rng, 8, 4, 0.4);
    const auto sol = solve_fh(spec);
    const auto ev = evaluate_policy(spec, extract_policies(spec, sol.value), 0.4);
    CHECK(max_abs_diff(ev.stages[0], sol.value.stages[0]) < 1e-12);
    // Any other policy does no better.
    Policy other{random_passive(rng, 8), 0.4};
    other.kernel = spec.passive();
    std::vector<std::vector<std::size_t>> cols(8);
    std::vector<std::vector<double>> probs(8);
    for (std::size_t x = 0; x < 8; ++x) {
      const auto row = spec.passive().row(x);
      cols[x].assign(row.cols.begin(), row.cols.end());
      probs[x] = random_distribution(rng, row.size());
    }
    other.kernel = StochasticMatrix::from_rows(cols, probs);
    const auto ev2 = evaluate_policy(spec, other, 0.4);
    for (std::size_t x = 0; x < 8; ++x) CHECK(ev2.stages[0][x] >= sol.value.stages[0][x] - 1e-12);
  }
  SUBCASE("first exit evaluation matches the optimum for the optimal policy") {
    const auto spec = random_fe(rng, 10, 0.3, 2);
    const auto sol = solve_fe(spec);
    const auto ev = evaluate_policy(spec, extract_policy(spec, sol.value.values()), 0.3);
    CHECK(max_abs_diff(ev.values(), sol.value.values()) < 1e-10);
  }
  SUBCASE("support violations") {
    const auto spec = random_fh(rng, 6, 2, 0.5);
    std::vector<std::vector<std::size_t>> cols(6);
    std::vector<std::vector<double>> probs(6);
    for (std::size_t x = 0; x < 6; ++x) {
      cols[x] = {0, 1, 2, 3, 4, 5};
      probs[x] = Vector(6, 1.0 / 6.0);
    }
    const Policy wide{StochasticMatrix::from_rows(cols, probs), 0.5};
    CHECK_THROWS_AS(evaluate_policy(spec, wide, 0.5), SupportError);
  }
  SUBCASE("IH evaluation is not offered") {
    const auto spec = random_ih(rng, 5, 0.5);
    CHECK_THROWS_AS(evaluate_policy(spec, Policy{spec.passive(), 0.5}, 0.5), InputError);
  }
}
