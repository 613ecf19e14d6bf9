#pragma once

#include "rlc/stochastic_matrix.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace rlc {

using Vector = std::vector<double>;

struct StateSpace {
  std::size_t n_states = 0;
  std::vector<std::string> labels;  ///< empty, or one unique label per state

  bool operator==(const StateSpace&) const = default;
};

/// Accumulate running cost for `horizon` steps, then pay the final cost.
struct FiniteHorizon {
  std::size_t horizon = 0;
  bool operator==(const FiniteHorizon&) const = default;
};

/// Accumulate running cost until the first entry into a terminal state.
struct FirstExit {
  std::vector<std::size_t> terminal_states;  ///< sorted, unique
  bool operator==(const FirstExit&) const = default;
};

/// Long-run average cost per step.
struct InfiniteHorizon {
  bool operator==(const InfiniteHorizon&) const = default;
};

using HorizonKind = std::variant<FiniteHorizon, FirstExit, InfiniteHorizon>;

/// State costs q(x) (or q(x, t) for finite-horizon problems) and final costs.
class CostModel {
 public:
  CostModel() = default;
  explicit CostModel(Vector running, Vector final_cost = {});
  /// running[t] is q(., t) for t = 0 .. T-1.
  static CostModel time_varying(std::vector<Vector> running, Vector final_cost);

  bool is_time_varying() const { return running_.size() > 1; }
  std::size_t stages() const { return running_.size(); }
  /// q(., t); time-invariant models ignore t.
  const Vector& running(std::size_t t = 0) const {
    return running_.size() == 1 ? running_.front() : running_.at(t);
  }
  const std::vector<Vector>& running_stages() const { return running_; }
  const Vector& final_cost() const { return final_; }
  bool has_final_cost() const { return !final_.empty(); }

  /// Every running cost entry is >= 0.
  bool running_nonnegative() const;

  bool operator==(const CostModel&) const = default;

 private:
  friend class ProblemSpec;
  std::vector<Vector> running_;
  Vector final_;
};

/// A complete problem instance. Structural invariants are checked on
/// construction (InputError); the passive rows are checked according to the
/// RowCheck used to build the matrix, and validate() reports the rest.
class ProblemSpec {
 public:
  ProblemSpec(StateSpace states, StochasticMatrix passive, CostModel costs, double alpha,
              HorizonKind kind);

  std::size_t size() const { return states_.n_states; }
  const StateSpace& states() const { return states_; }
  const StochasticMatrix& passive() const { return passive_; }
  const CostModel& costs() const { return costs_; }
  double alpha() const { return alpha_; }
  const HorizonKind& kind() const { return kind_; }

  bool is_finite_horizon() const { return std::holds_alternative<FiniteHorizon>(kind_); }
  bool is_first_exit() const { return std::holds_alternative<FirstExit>(kind_); }
  bool is_infinite_horizon() const { return std::holds_alternative<InfiniteHorizon>(kind_); }

  /// T for finite-horizon problems; throws otherwise.
  std::size_t horizon() const;
  /// Terminal set for first-exit problems; throws otherwise.
  const std::vector<std::size_t>& terminal_states() const;
  /// terminal[x] is true iff x is terminal (all false unless first-exit).
  std::vector<bool> terminal_mask() const;

  /// q(., t) with the final cost substituted at t == T for finite-horizon
  /// problems.
  const Vector& cost_at(std::size_t t) const;
  const Vector& final_cost() const { return costs_.final_cost(); }

  ProblemSpec with_alpha(double alpha) const;
  ProblemSpec with_costs(CostModel costs) const;
  ProblemSpec with_passive(StochasticMatrix passive) const;

  bool operator==(const ProblemSpec&) const = default;

 private:
  StateSpace states_;
  StochasticMatrix passive_;
  CostModel costs_;
  double alpha_;
  HorizonKind kind_;
};

/// Controlled dynamics pi_co(x'|x) and the risk parameter they were built
/// for. Rows must sum to 1 within kRowSumTolerance.
struct Policy {
  StochasticMatrix kernel;
  double alpha = 0.0;
};

/// Throws InputError unless supp[policy(.|x)] is inside supp[passive(.|x)]
/// for every x.
void check_policy_support(const Policy& policy, const StochasticMatrix& passive);

struct ValidationReport {
  std::vector<std::pair<std::size_t, double>> row_sum_violations;  ///< (row, sum)
  bool irreducible = false;
  bool unichain = false;
  std::vector<std::size_t> unreachable_states;  ///< first-exit only
  bool q_nonnegative = false;
  bool alpha_at_most_one = false;
  /// First-exit existence guarantee (q >= 0 and alpha <= 1).
  bool fe_condition_holds = false;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
  bool operator==(const ValidationReport&) const = default;
};

/// Report-only checks: row sums, irreducibility and unichain structure of
/// the passive sparsity graph, first-exit reachability of the terminal set and the sign
/// conditions behind first-exit solvability. Never throws for a constructed
/// spec.
ValidationReport validate(const ProblemSpec& spec);

}  // namespace rlc
