#include "rlc/model.hpp"

#include "rlc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace rlc {

namespace {

void check_cost_vector(const Vector& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw InputError(std::string(what) + " has " + std::to_string(v.size()) +
                     " entries, expected " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[i])) {
      throw InputError(std::string(what) + " is non-finite at state " + std::to_string(i));
    }
  }
}

}  // namespace

CostModel::CostModel(Vector running, Vector final_cost) : final_(std::move(final_cost)) {
  running_.push_back(std::move(running));
}

CostModel CostModel::time_varying(std::vector<Vector> running, Vector final_cost) {
  if (running.empty()) throw InputError("time-varying cost needs at least one stage");
  CostModel c;
  c.running_ = std::move(running);
  c.final_ = std::move(final_cost);
  return c;
}

bool CostModel::running_nonnegative() const {
  for (const auto& stage : running_) {
    if (std::any_of(stage.begin(), stage.end(), [](double q) { return q < 0.0; })) return false;
  }
  return true;
}

ProblemSpec::ProblemSpec(StateSpace states, StochasticMatrix passive, CostModel costs,
                         double alpha, HorizonKind kind)
    : states_(std::move(states)),
      passive_(std::move(passive)),
      costs_(std::move(costs)),
      alpha_(alpha),
      kind_(std::move(kind)) {
  const auto n = states_.n_states;
  if (n == 0) throw InputError("n_states must be >= 1");
  if (!states_.labels.empty()) {
    if (states_.labels.size() != n) throw InputError("labels must have exactly n_states entries");
    std::set<std::string> unique(states_.labels.begin(), states_.labels.end());
    if (unique.size() != n) throw InputError("labels must be unique");
  }
  if (passive_.size() != n) {
    throw InputError("passive dynamics has " + std::to_string(passive_.size()) +
                     " rows, expected " + std::to_string(n));
  }
  if (!std::isfinite(alpha_)) throw InputError("alpha must be finite");
  if (costs_.running_.empty()) throw InputError("running cost is missing");
  for (const auto& stage : costs_.running_) check_cost_vector(stage, n, "running cost q");

  if (auto* fh = std::get_if<FiniteHorizon>(&kind_)) {
    if (costs_.is_time_varying() && costs_.stages() != fh->horizon) {
      throw InputError("time-varying cost has " + std::to_string(costs_.stages()) +
                       " stages, expected horizon " + std::to_string(fh->horizon));
    }
    if (costs_.final_.empty()) {
      if (costs_.is_time_varying()) throw InputError("time-varying cost needs q_final");
      costs_.final_ = costs_.running_.front();
    }
    check_cost_vector(costs_.final_, n, "final cost q_final");
  } else if (auto* fe = std::get_if<FirstExit>(&kind_)) {
    if (costs_.is_time_varying()) throw InputError("time-varying cost is only allowed for fh");
    auto& term = fe->terminal_states;
    std::sort(term.begin(), term.end());
    if (std::adjacent_find(term.begin(), term.end()) != term.end()) {
      throw InputError("terminal_states contains duplicates");
    }
    if (term.empty()) throw InputError("terminal_states must be non-empty");
    if (term.back() >= n) throw InputError("terminal state index out of range");
    if (term.size() >= n) throw InputError("terminal_states must be a strict subset of the states");
    if (costs_.final_.empty()) costs_.final_ = costs_.running_.front();
    check_cost_vector(costs_.final_, n, "final cost q_final");
  } else {
    if (costs_.is_time_varying()) throw InputError("time-varying cost is only allowed for fh");
    if (!costs_.final_.empty()) throw InputError("q_final is not allowed for ih problems");
  }
}

std::size_t ProblemSpec::horizon() const {
  if (auto* fh = std::get_if<FiniteHorizon>(&kind_)) return fh->horizon;
  throw InputError("problem is not finite-horizon");
}

const std::vector<std::size_t>& ProblemSpec::terminal_states() const {
  if (auto* fe = std::get_if<FirstExit>(&kind_)) return fe->terminal_states;
  throw InputError("problem is not first-exit");
}

std::vector<bool> ProblemSpec::terminal_mask() const {
  std::vector<bool> mask(size(), false);
  if (auto* fe = std::get_if<FirstExit>(&kind_)) {
    for (auto s : fe->terminal_states) mask[s] = true;
  }
  return mask;
}

const Vector& ProblemSpec::cost_at(std::size_t t) const {
  if (auto* fh = std::get_if<FiniteHorizon>(&kind_)) {
    if (t >= fh->horizon) return costs_.final_cost();
  }
  return costs_.running(t);
}

ProblemSpec ProblemSpec::with_alpha(double alpha) const {
  return ProblemSpec(states_, passive_, costs_, alpha, kind_);
}

ProblemSpec ProblemSpec::with_costs(CostModel costs) const {
  return ProblemSpec(states_, passive_, std::move(costs), alpha_, kind_);
}

ProblemSpec ProblemSpec::with_passive(StochasticMatrix passive) const {
  return ProblemSpec(states_, std::move(passive), costs_, alpha_, kind_);
}

void check_policy_support(const Policy& policy, const StochasticMatrix& passive) {
  if (policy.kernel.size() != passive.size()) {
    throw InputError("policy has " + std::to_string(policy.kernel.size()) + " rows, expected " +
                     std::to_string(passive.size()));
  }
  for (std::size_t i = 0; i < passive.size(); ++i) {
    for (auto j : policy.kernel.row(i).cols) {
      if (passive.at(i, j) <= 0.0) {
        throw SupportError("policy row " + std::to_string(i) + " puts mass on state " +
                               std::to_string(j) + " outside the passive support",
                           j);
      }
    }
  }
}

ValidationReport validate(const ProblemSpec& spec) {
  ValidationReport report;
  const auto& passive = spec.passive();
  for (std::size_t i = 0; i < passive.size(); ++i) {
    const double sum = passive.row_sum(i);
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      report.row_sum_violations.emplace_back(i, sum);
      std::ostringstream os;
      os.precision(17);
      os << "row " << i << " sums to " << sum << ", expected 1";
      report.errors.push_back(os.str());
    }
  }

  report.irreducible = is_irreducible(passive);
  report.unichain = report.irreducible || is_unichain(passive);
  if (spec.is_infinite_horizon() && !report.unichain) {
    report.errors.push_back("passive dynamics have more than one closed class; the "
                            "infinite-horizon problem needs a single recurrent class");
  } else if (spec.is_infinite_horizon() && !report.irreducible) {
    report.warnings.push_back("passive dynamics have transient states");
  }

  report.q_nonnegative = spec.costs().running_nonnegative();
  report.alpha_at_most_one = spec.alpha() <= 1.0;

  if (spec.is_first_exit()) {
    const auto& term = spec.terminal_states();
    report.unreachable_states = states_not_reaching(passive, term);
    if (!report.unreachable_states.empty()) {
      std::ostringstream os;
      os << "states with no path to the terminal set:";
      for (auto s : report.unreachable_states) os << ' ' << s;
      report.errors.push_back(os.str());
    }
    report.fe_condition_holds = report.q_nonnegative && report.alpha_at_most_one;
    if (!report.fe_condition_holds) {
      report.warnings.push_back("first-exit existence guarantee (q >= 0 and alpha <= 1) does "
                                "not hold; the solver may diverge");
    }
  }
  return report;
}

}  // namespace rlc
