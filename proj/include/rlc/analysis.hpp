#pragma once

// Computations on top of solver output: composition of z-functions,
// passive-rollout estimates of the value, stationary distributions of
// controlled chains, the adversary of the equivalent zero-sum game and a
// brute-force check of that game on tiny problems.

#include "rlc/divergence.hpp"
#include "rlc/model.hpp"
#include "rlc/solver.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace rlc {

// ---- composition ----------------------------------------------------------

/// Components share `spec`'s passive dynamics, running cost, alpha and kind
/// (fh or fe); component i was solved with final cost final_costs[i].
struct CompositionRequest {
  ProblemSpec spec;
  std::vector<ZFunction> components;
  std::vector<Vector> final_costs;
  Vector weights;
};

struct CompositionResult {
  ZFunction z;           ///< sum_i w_i z_i, accumulated in log space
  Vector final_cost;     ///< 1/(alpha-1) log sum_i w_i exp((alpha-1) q_f^i)
  ValueFunction value;   ///< log z / (alpha - 1)
  double residual = 0.0; ///< Bellman residual against the composite problem
};

/// Residual checks use this bound, scaled by max(1, |v|_inf).
inline constexpr double kCompositionTolerance = 1e-10;

/// alpha != 1. Throws InputError on mismatched structure or weights and
/// NumericalError if the composite fails its Bellman check.
CompositionResult compose(const CompositionRequest& request);

/// alpha == 1: value functions of problems that differ only in their costs
/// combine linearly in both running and final cost.
struct LinearCompositionRequest {
  std::vector<ProblemSpec> components;
  std::vector<ValueFunction> values;
  Vector weights;
};

struct LinearCompositionResult {
  ProblemSpec spec;  ///< costs sum_i w_i q^i and sum_i w_i q_f^i
  ValueFunction value;
  double residual = 0.0;
};

LinearCompositionResult compose_values(const LinearCompositionRequest& request);

// ---- sampling -------------------------------------------------------------

struct SamplingOptions {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  /// Step cap. FE rollouts that hit it are marked unterminated; IH rollouts
  /// always run exactly this many steps.
  std::size_t t_max = 100000;
  bool keep_states = true;
  unsigned threads = 1;
};

struct TrajectorySample {
  std::vector<std::size_t> states;  ///< empty unless keep_states
  double accumulated_cost = 0.0;
  bool terminated = true;
  std::size_t length = 0;  ///< number of transitions
};

/// n rollouts of `kernel` from `start`. FH: exactly T steps, cost
/// sum_{t<T} q(x_t, t) + q_T(x_T). FE: until the first terminal state, whose
/// final cost is the last summand. Rollout j draws from its own generator
/// seeded by (seed, j), so results do not depend on `threads`.
std::vector<TrajectorySample> sample_trajectories(const ProblemSpec& spec,
                                                  const StochasticMatrix& kernel,
                                                  std::size_t start,
                                                  const SamplingOptions& options);

struct PathIntegralEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double truncated_fraction = 0.0;
  std::size_t used = 0;
};

/// Value at `start` from passive rollouts: log mean exp((alpha-1) cost) /
/// (alpha-1), or the mean cost at alpha == 1. The standard error uses the
/// delta method. Unterminated FE rollouts are dropped and counted.
PathIntegralEstimate path_integral_estimate(const ProblemSpec& spec, std::size_t start,
                                            const SamplingOptions& options);

// ---- stationary distribution ----------------------------------------------

struct StationaryOptions {
  double tol = 1e-12;  ///< on ||mu P - mu||_1
  std::size_t max_iter = 1000000;
  /// Lazy power steps before switching to a direct sparse solve (which is
  /// then polished by further power steps); 0 never switches.
  std::size_t direct_after = 2000;
};

struct StationaryResult {
  Distribution mu;
  double residual = 0.0;
  std::size_t iterations = 0;
  bool used_direct_solve = false;
};

/// Throws InputError if the chain has more than one closed class and
/// NumericalError if it does not converge.
StationaryResult stationary_distribution(const StochasticMatrix& kernel,
                                         const StationaryOptions& options = {});

// ---- game -----------------------------------------------------------------

/// pi_a(x'|x) ~ pi0(x'|x) exp((alpha-1) v(x')). Rejects alpha == 0.
Policy adversary_policy(const ProblemSpec& spec, std::span<const double> v);

enum class GameCostOrder {
  kDisplayed,  ///< c = q + D_a(u_c || pi0) - KL(u_a || u_c) / a
  kSwapped,    ///< c = q + D_a(pi0 || u_c) - KL(u_a || u_c) / a
};

struct GameCheckOptions {
  double grid_step = 0.01;
  GameCostOrder order = GameCostOrder::kDisplayed;
  /// Upper bound on (controller point, adversary point) pairs evaluated.
  std::size_t max_evaluations = 400000000;
};

struct GameCheckReport {
  ValueFunction brute_force;
  ValueFunction solver;
  double gap = 0.0;  ///< sup over t, x of |brute_force - solver|
  std::size_t evaluations = 0;
};

/// Upper value of the zero-sum game by exhaustive min over controller
/// distributions and max over adversary distributions on simplex lattices
/// of the given step. FH only, at most 4 states, T <= 3, alpha > 0.
GameCheckReport game_bruteforce_check(const ProblemSpec& spec, const GameCheckOptions& options = {});

/// All points of the probability simplex in dimension k whose coordinates
/// are multiples of 1/m.
std::vector<std::vector<double>> simplex_lattice(std::size_t k, std::size_t m);

}  // namespace rlc
