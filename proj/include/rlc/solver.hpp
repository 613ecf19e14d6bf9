#pragma once

// Linear Bellman solvers for risk-sensitive linearly solvable control.
//
// With a = alpha - 1, z = exp(a v) and Q = exp(a q), the optimal value
// satisfies
//
//   finite horizon   z_t = Q_t * (P0 z_{t+1}),           z_T = exp(a q_T)
//   first exit       z   = Q   * (P0 z)   on non-terminal states
//   infinite horizon rho z = Q * (P0 z),                 rho = exp(a cbar)
//
// and, for alpha == 1, the same equations hold linearly in v. Everything in
// z-space is carried as log z; v is recovered as log z / a.

#include "rlc/model.hpp"

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace rlc {

struct SolverOptions {
  /// Stop when the sup-norm Bellman residual (and, for IH, the change in
  /// log rho) falls below this.
  double tol = 1e-12;
  std::size_t max_iter = 100000;
  /// Iterates are checked for growth every `divergence_window` iterations.
  std::size_t divergence_window = 1000;
  /// IH power iteration that has not converged after this many steps gets
  /// one shift-invert correction of z before continuing; 0 disables it.
  std::size_t refine_after = 2000;
};

/// v^(alpha); one stage for FE/IH, T + 1 stages (t = 0..T) for FH.
struct ValueFunction {
  std::vector<Vector> stages;
  double alpha = 0.0;

  const Vector& values() const { return stages.front(); }
};

/// log z = (alpha - 1) v per stage, and the per-state multipliers
/// log Q = (alpha - 1) q per running-cost stage. Empty for alpha == 1.
struct ZFunction {
  std::vector<Vector> log_stages;
  std::vector<Vector> log_multiplier;
  double alpha = 0.0;

  bool empty() const { return log_stages.empty(); }
  /// z itself; may under/overflow where log z is large.
  Vector values(std::size_t t = 0) const;
};

struct SolveReport {
  double average_cost = std::numeric_limits<double>::quiet_NaN();       ///< IH only
  double log_spectral_estimate = std::numeric_limits<double>::quiet_NaN();  ///< IH, alpha != 1
  std::size_t iterations = 0;
  std::size_t refinement_steps = 0;  ///< IH shift-invert solves, if any
  double final_residual = 0.0;
  std::vector<std::string> warnings;

  double spectral_estimate() const;  ///< rho = exp(log rho)
};

struct Solution {
  ValueFunction value;
  ZFunction z;
  SolveReport report;
};

Solution solve_fh(const ProblemSpec& spec, const SolverOptions& options = {});
Solution solve_fe(const ProblemSpec& spec, const SolverOptions& options = {});
/// IH values are normalised so that min v = 0 (alpha != 1) or sum v = 0
/// (alpha == 1).
Solution solve_ih(const ProblemSpec& spec, const SolverOptions& options = {});
/// Dispatches on spec.kind().
Solution solve(const ProblemSpec& spec, const SolverOptions& options = {});

/// z from v: log z = (alpha - 1) v per stage.
ZFunction to_z_function(const ProblemSpec& spec, const ValueFunction& value);

/// pi*(x'|x) ~ pi0(x'|x) exp(-v(x')) over supp[pi0(.|x)].
Policy extract_policy(const ProblemSpec& spec, std::span<const double> v);
/// One policy per decision stage: FH stage t uses v_{t+1}; FE/IH return a
/// single stationary policy.
std::vector<Policy> extract_policies(const ProblemSpec& spec, const ValueFunction& value);

/// Risk-sensitive value of a fixed policy at risk `alpha_eval`:
///   v_t(x) = q(x, t) + D_a(pi0(.|x) || pi(.|x)) + Psi^a_pi(.|x)[v_{t+1}].
/// `policies` holds one stationary policy or, for FH, one per stage.
/// Only FH and FE problems are supported.
ValueFunction evaluate_policy(const ProblemSpec& spec, std::span<const Policy> policies,
                              double alpha_eval, const SolverOptions& options = {});
ValueFunction evaluate_policy(const ProblemSpec& spec, const Policy& policy, double alpha_eval,
                              const SolverOptions& options = {});

/// Sup-norm residual of the optimality equation
///   v(x) [+ cbar] = q(x) + Psi^(alpha-1)_pi0(.|x)[v]
/// including boundary conditions, evaluated directly in v-space.
double bellman_residual(const ProblemSpec& spec, const ValueFunction& value,
                        double average_cost = 0.0);

}  // namespace rlc
