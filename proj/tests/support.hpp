#pragma once

// Random problem generators and independent oracles shared by the unit
// tests and the acceptance runner.

#include "rlc/divergence.hpp"
#include "rlc/model.hpp"
#include "rlc/stochastic_matrix.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace rlc::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Full-support random distribution of size k.
inline std::vector<double> random_distribution(Rng& rng, std::size_t k, double floor = 0.02) {
  std::vector<double> p(k);
  double total = 0.0;
  for (double& x : p) {
    x = floor + uniform(rng);
    total += x;
  }
  for (double& x : p) x /= total;
  return p;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t k, double lo, double hi) {
  std::vector<double> v(k);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

/// Sparse random kernel: each row has the edge i -> i+1 (mod n), so the
/// chain is irreducible, plus up to `extra` random targets.
inline StochasticMatrix random_passive(Rng& rng, std::size_t n, std::size_t extra = 3) {
  std::vector<std::vector<std::size_t>> cols(n);
  std::vector<std::vector<double>> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> c{(i + 1) % n};
    for (std::size_t k = 0; k < extra; ++k) c.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    cols[i] = c;
    probs[i] = random_distribution(rng, c.size(), 0.05);
  }
  return StochasticMatrix::from_rows(std::move(cols), std::move(probs), RowCheck::kRenormalize);
}

inline ProblemSpec random_fh(Rng& rng, std::size_t n, std::size_t horizon, double alpha,
                             bool time_varying = false) {
  Vector final_cost = random_vector(rng, n, 0.0, 2.0);
  if (time_varying) {
    std::vector<Vector> stages;
    for (std::size_t t = 0; t < horizon; ++t) stages.push_back(random_vector(rng, n, 0.0, 1.0));
    return ProblemSpec(StateSpace{n, {}}, random_passive(rng, n),
                       CostModel::time_varying(std::move(stages), std::move(final_cost)), alpha,
                       FiniteHorizon{horizon});
  }
  return ProblemSpec(StateSpace{n, {}}, random_passive(rng, n),
                     CostModel(random_vector(rng, n, 0.0, 1.0), std::move(final_cost)), alpha,
                     FiniteHorizon{horizon});
}

/// First-exit problem whose last `n_terminal` states are terminal.
inline ProblemSpec random_fe(Rng& rng, std::size_t n, double alpha, std::size_t n_terminal = 1) {
  std::vector<std::size_t> term;
  for (std::size_t k = 0; k < n_terminal; ++k) term.push_back(n - 1 - k);
  std::sort(term.begin(), term.end());
  return ProblemSpec(StateSpace{n, {}}, random_passive(rng, n),
                     CostModel(random_vector(rng, n, 0.1, 1.0), random_vector(rng, n, 0.0, 2.0)), alpha,
                     FirstExit{term});
}

inline ProblemSpec random_ih(Rng& rng, std::size_t n, double alpha) {
  return ProblemSpec(StateSpace{n, {}}, random_passive(rng, n),
                     CostModel(random_vector(rng, n, 0.0, 1.0)), alpha, InfiniteHorizon{});
}

/// Uniform two-state chain.
inline StochasticMatrix uniform2() {
  return StochasticMatrix::from_rows({{0, 1}, {0, 1}}, {{0.5, 0.5}, {0.5, 0.5}});
}

/// Two-state first-exit fixture: state 1 terminal with q_f = 0, state 0
/// pays q = 1 and exits with probability p each step.
inline ProblemSpec exit_fixture(double p, double alpha) {
  auto passive = StochasticMatrix::from_rows({{0, 1}, {1}}, {{1.0 - p, p}, {1.0}});
  return ProblemSpec(StateSpace{2, {}}, std::move(passive), CostModel({1.0, 0.0}, {0.0, 0.0}), alpha,
                     FirstExit{{1}});
}

/// Closed form of the exit fixture: v(0) = q + Psi^(a-1) over {v(0), 0}
/// solved as a scalar fixed point in z = exp((alpha-1) v).
inline double exit_fixture_value(double p, double alpha) {
  if (std::abs(alpha - 1.0) < 1e-12) return 1.0 / p;
  const double a = alpha - 1.0;
  const double qz = std::exp(a);  // Q(0)
  const double z = qz * p / (1.0 - qz * (1.0 - p));
  return std::log(z) / a;
}

/// All points of the k-simplex on a lattice with step 1/m (independent of
/// the library's lattice generator).
inline void for_each_simplex_point(std::size_t k, std::size_t m, const auto& fn) {
  std::vector<std::size_t> c(k, 0);
  std::vector<double> p(k);
  auto rec = [&](auto&& self, std::size_t i, std::size_t left) -> void {
    if (i + 1 == k) {
      c[i] = left;
      for (std::size_t j = 0; j < k; ++j) p[j] = static_cast<double>(c[j]) / static_cast<double>(m);
      fn(p);
      return;
    }
    for (std::size_t x = 0; x <= left; ++x) {
      c[i] = x;
      self(self, i + 1, left - x);
    }
  };
  rec(rec, 0, m);
}

/// Brute-force min over pi on the lattice of D_a(pi0 || pi) + Psi^a_pi[f].
/// Points outside the admissible support for this order are skipped.
inline double brute_force_variational(std::span<const double> pi0, std::span<const double> f,
                                      double alpha, std::size_t m) {
  double best = std::numeric_limits<double>::infinity();
  for_each_simplex_point(pi0.size(), m, [&](const std::vector<double>& pi) {
    const auto d = try_renyi_divergence(pi0, pi, alpha);
    if (!d) return;
    // Psi over the support of pi.
    std::vector<double> w, g;
    for (std::size_t i = 0; i < pi.size(); ++i) {
      if (pi[i] > 0.0) {
        w.push_back(pi[i]);
        g.push_back(f[i]);
      }
    }
    best = std::min(best, *d + psi(w, g, alpha));
  });
  return best;
}

/// Direct Renyi divergence by summation, without log-domain tricks;
/// fine for well-conditioned inputs.
inline double naive_renyi(std::span<const double> p, std::span<const double> q, double alpha) {
  if (std::abs(alpha) < 1e-12) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += q[i] * std::log(q[i] / p[i]);
    return s;
  }
  if (std::abs(alpha - 1.0) < 1e-12) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
    return s;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::pow(p[i], alpha) * std::pow(q[i], 1.0 - alpha);
  return std::log(s) / (alpha * (alpha - 1.0));
}

/// Dense passive matrix.
inline Eigen::MatrixXd dense(const StochasticMatrix& m) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m.size()));
  for (const auto& t : m.triplets()) d(static_cast<Eigen::Index>(t.from), static_cast<Eigen::Index>(t.to)) = t.prob;
  return d;
}

/// First-exit z on non-terminal states by a dense direct solve of
/// (I - diag(Q_N) P_NN) z_N = diag(Q_N) P_NT z_T.
inline Vector direct_fe_z(const ProblemSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.size());
  const double a = spec.alpha() - 1.0;
  const auto p = dense(spec.passive());
  const auto term = spec.terminal_mask();
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (term[ui]) {
      rhs(i) = std::exp(a * spec.final_cost()[ui]);
      continue;
    }
    const double qi = std::exp(a * spec.costs().running()[ui]);
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) -= qi * p(i, j);
  }
  const Eigen::VectorXd z = m.partialPivLu().solve(rhs);
  return Vector(z.data(), z.data() + n);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(std::abs(a[i]), std::abs(b[i])));
  }
  return m;
}

}  // namespace rlc::testing
