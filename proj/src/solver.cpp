#include "rlc/solver.hpp"

#include "rlc/divergence.hpp"
#include "rlc/errors.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rlc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Row sums of shifted exponentials above this keep full relative precision.
constexpr double kSafeRowSum = 1e-250;

// Psi over one sparse row, with the row's values gathered from v.
double row_psi(const RowView& row, std::span<const double> v, double order,
               std::vector<double>& buf) {
  buf.resize(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) buf[k] = v[row.cols[k]];
  return psi(row.probs, buf, order);
}

// out_i = log sum_j P_ij exp(lz_j) for rows with active[i] (all rows if
// active is empty). A global shift handles the common case with a single
// exp per state; rows whose shifted sum is too small to trust fall back to a
// per-row log-sum-exp.
void log_matvec(const StochasticMatrix& p, const Vector& lz, const std::vector<bool>& active,
                Vector& out, Vector& scratch) {
  const auto n = p.size();
  const double shift = *std::max_element(lz.begin(), lz.end());
  scratch.resize(n);
  for (std::size_t j = 0; j < n; ++j) scratch[j] = std::exp(lz[j] - shift);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!active.empty() && !active[i]) continue;
    const auto row = p.row(i);
    double s = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) s += row.probs[k] * scratch[row.cols[k]];
    if (s > kSafeRowSum) {
      out[i] = shift + std::log(s);
      continue;
    }
    double row_max = -kInf;
    for (auto j : row.cols) row_max = std::max(row_max, lz[j]);
    if (row_max == -kInf) {
      out[i] = -kInf;
      continue;
    }
    double s2 = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      s2 += row.probs[k] * std::exp(lz[row.cols[k]] - row_max);
    }
    out[i] = row_max + std::log(s2);
  }
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

// Tracks the residual sequence of a fixed-point iteration and flags
// sustained growth.
class DivergenceMonitor {
 public:
  explicit DivergenceMonitor(std::size_t window) : window_(std::max<std::size_t>(window, 1)) {}

  /// Returns true once the residual has failed to decrease over three
  /// consecutive windows.
  bool diverging(std::size_t iteration, double residual) {
    if (iteration % window_ != 0) return false;
    if (residual >= last_checkpoint_) {
      ++strikes_;
    } else {
      strikes_ = 0;
    }
    last_checkpoint_ = residual;
    return strikes_ >= 3;
  }

 private:
  std::size_t window_;
  double last_checkpoint_ = kInf;
  int strikes_ = 0;
};

std::vector<bool> non_terminal_mask(const ProblemSpec& spec) {
  auto mask = spec.terminal_mask();
  mask.flip();
  return mask;
}

void check_first_exit_reachability(const ProblemSpec& spec) {
  const auto unreachable = states_not_reaching(spec.passive(), spec.terminal_states());
  if (!unreachable.empty()) {
    std::ostringstream os;
    os << "first-exit problem: " << unreachable.size()
       << " state(s) cannot reach the terminal set under the passive dynamics (first: "
       << unreachable.front() << ")";
    throw InputError(os.str());
  }
}

[[noreturn]] void throw_diverged(const char* what, double residual) {
  throw NumericalError(std::string(what) + " is diverging (residual " + fmt(residual) +
                       "); existence is only guaranteed if q >= 0, alpha <= 1");
}

}  // namespace

Vector ZFunction::values(std::size_t t) const {
  Vector out = log_stages.at(t);
  for (double& x : out) x = std::exp(x);
  return out;
}

double SolveReport::spectral_estimate() const { return std::exp(log_spectral_estimate); }

ZFunction to_z_function(const ProblemSpec& spec, const ValueFunction& value) {
  ZFunction z;
  z.alpha = value.alpha;
  if (near_unit_order(value.alpha)) return z;
  const double a = value.alpha - 1.0;
  for (const auto& stage : value.stages) {
    Vector lz(stage.size());
    for (std::size_t i = 0; i < stage.size(); ++i) lz[i] = a * stage[i];
    z.log_stages.push_back(std::move(lz));
  }
  for (const auto& stage : spec.costs().running_stages()) {
    Vector lq(stage.size());
    for (std::size_t i = 0; i < stage.size(); ++i) lq[i] = a * stage[i];
    z.log_multiplier.push_back(std::move(lq));
  }
  return z;
}

Solution solve_fh(const ProblemSpec& spec, const SolverOptions&) {
  const auto horizon = spec.horizon();
  const auto n = spec.size();
  const double order = spec.alpha() - 1.0;
  const auto& passive = spec.passive();

  ValueFunction value;
  value.alpha = spec.alpha();
  value.stages.assign(horizon + 1, Vector(n));
  value.stages[horizon] = spec.final_cost();
  std::vector<double> buf;
  for (std::size_t t = horizon; t-- > 0;) {
    const auto& q = spec.cost_at(t);
    const auto& next = value.stages[t + 1];
    auto& cur = value.stages[t];
    for (std::size_t x = 0; x < n; ++x) cur[x] = q[x] + row_psi(passive.row(x), next, order, buf);
  }

  Solution sol;
  sol.report.iterations = horizon;
  sol.report.final_residual = bellman_residual(spec, value);
  sol.z = to_z_function(spec, value);
  sol.value = std::move(value);
  return sol;
}

Solution solve_fe(const ProblemSpec& spec, const SolverOptions& options) {
  check_first_exit_reachability(spec);
  const auto n = spec.size();
  const auto& passive = spec.passive();
  const auto& q = spec.costs().running();
  const auto& final_cost = spec.final_cost();
  const auto active = non_terminal_mask(spec);

  Solution sol;
  if (!spec.costs().running_nonnegative()) {
    sol.report.warnings.push_back("running cost takes negative values; convergence is not "
                                  "guaranteed");
  }
  if (spec.alpha() > 1.0) {
    sol.report.warnings.push_back("alpha > 1; convergence is not guaranteed");
  }

  Vector v(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    if (!active[x]) v[x] = final_cost[x];
  }

  DivergenceMonitor monitor(options.divergence_window);
  double residual = kInf;
  std::size_t it = 0;
  if (near_unit_order(spec.alpha())) {
    Vector next(v);
    for (it = 1; it <= options.max_iter; ++it) {
      residual = 0.0;
      for (std::size_t x = 0; x < n; ++x) {
        if (!active[x]) continue;
        const auto row = passive.row(x);
        double e = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) e += row.probs[k] * v[row.cols[k]];
        next[x] = q[x] + e;
        residual = std::max(residual, std::abs(next[x] - v[x]));
      }
      std::swap(v, next);
      if (!std::isfinite(residual)) throw NumericalError("first-exit iteration became non-finite");
      if (residual <= options.tol) break;
      if (monitor.diverging(it, residual)) throw_diverged("first-exit iteration", residual);
    }
  } else {
    const double a = spec.alpha() - 1.0;
    Vector lz(n), next(n), scratch;
    for (std::size_t x = 0; x < n; ++x) lz[x] = a * v[x];
    for (it = 1; it <= options.max_iter; ++it) {
      log_matvec(passive, lz, active, next, scratch);
      residual = 0.0;
      for (std::size_t x = 0; x < n; ++x) {
        if (!active[x]) {
          next[x] = lz[x];
          continue;
        }
        next[x] += a * q[x];
        residual = std::max(residual, std::abs(next[x] - lz[x]) / std::abs(a));
      }
      std::swap(lz, next);
      if (!std::isfinite(residual)) throw NumericalError("first-exit iteration became non-finite");
      if (residual <= options.tol) break;
      if (monitor.diverging(it, residual)) throw_diverged("first-exit iteration", residual);
    }
    for (std::size_t x = 0; x < n; ++x) {
      if (active[x]) v[x] = lz[x] / a;
    }
  }
  if (residual > options.tol) {
    throw NumericalError("first-exit iteration did not converge in " +
                         std::to_string(options.max_iter) + " iterations (residual " +
                         fmt(residual) + ")");
  }

  sol.value.alpha = spec.alpha();
  sol.value.stages = {std::move(v)};
  sol.report.iterations = std::min(it, options.max_iter);
  sol.report.final_residual = bellman_residual(spec, sol.value);
  sol.z = to_z_function(spec, sol.value);
  return sol;
}

namespace {

// alpha == 1: v + cbar = q + P0 v with sum v = 0, solved directly.
Solution solve_ih_linear(const ProblemSpec& spec) {
  const auto n = spec.size();
  const auto& passive = spec.passive();
  const auto& q = spec.costs().running();
  using Sparse = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(passive.nnz() + 3 * n);
  const auto dim = static_cast<Eigen::Index>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    entries.emplace_back(ii, ii, 1.0);
    const auto row = passive.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) {
      entries.emplace_back(ii, static_cast<Eigen::Index>(row.cols[k]), -row.probs[k]);
    }
    entries.emplace_back(ii, dim, 1.0);
    entries.emplace_back(dim, ii, 1.0);
  }
  Sparse m(dim + 1, dim + 1);
  m.setFromTriplets(entries.begin(), entries.end());
  m.makeCompressed();
  Eigen::VectorXd rhs(dim + 1);
  for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i)) = q[i];
  rhs(dim) = 0.0;

  Eigen::SparseLU<Sparse> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) {
    throw NumericalError("average-cost linear system is singular: " + lu.lastErrorMessage());
  }
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !sol.allFinite()) {
    throw NumericalError("average-cost linear solve failed");
  }

  Solution out;
  out.value.alpha = spec.alpha();
  out.value.stages = {Vector(sol.data(), sol.data() + n)};
  out.report.average_cost = sol(dim);
  out.report.iterations = 1;
  out.report.final_residual = bellman_residual(spec, out.value, out.report.average_cost);
  return out;
}

// Shift-invert steps on M' = D^-1 M D with D = diag(z) and M = diag(exp(a q))
// P0. M' has its Perron vector near 1 wherever z is already accurate, so
// the correction y stays representable even where z spans hundreds of
// orders of magnitude. The shift sits just above the Collatz-Wielandt
// bound on the Perron root, which keeps (shift I - M')^-1 nonnegative.
// Returns the number of linear solves, or 0 if the correction was rejected.
std::size_t refine_perron(const StochasticMatrix& passive, const Vector& q, double a, Vector& lz) {
  using Sparse = Eigen::SparseMatrix<double, Eigen::ColMajor>;
  const auto n = passive.size();
  const auto dim = static_cast<Eigen::Index>(n);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(passive.nnz() + n);
  double r_min = kInf, r_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = passive.row(i);
    double r = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      const double m = row.probs[k] * std::exp(a * q[i] + lz[row.cols[k]] - lz[i]);
      entries.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(row.cols[k]), -m);
      r += m;
    }
    if (!std::isfinite(r)) return 0;
    r_min = std::min(r_min, r);
    r_max = std::max(r_max, r);
  }
  const double shift = r_max + (r_max - r_min) + 1e-12 * r_max;
  for (std::size_t i = 0; i < n; ++i) {
    entries.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), shift);
  }
  Sparse m(dim, dim);
  m.setFromTriplets(entries.begin(), entries.end());
  m.makeCompressed();
  Eigen::SparseLU<Sparse> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) return 0;

  Eigen::VectorXd y = Eigen::VectorXd::Ones(dim);
  std::size_t steps = 0;
  for (; steps < 50; ++steps) {
    Eigen::VectorXd next = lu.solve(y);
    if (lu.info() != Eigen::Success || !next.allFinite()) return 0;
    next /= next.maxCoeff();
    const double change = (next - y).cwiseAbs().maxCoeff();
    y = std::move(next);
    if (change <= 1e-15) break;
  }
  if (!(y.minCoeff() > 0.0)) return 0;
  for (std::size_t i = 0; i < n; ++i) lz[i] += std::log(y(static_cast<Eigen::Index>(i)));
  const double top = *std::max_element(lz.begin(), lz.end());
  for (double& x : lz) x -= top;
  return steps + 1;
}

}  // namespace

Solution solve_ih(const ProblemSpec& spec, const SolverOptions& options) {
  if (!spec.is_infinite_horizon()) throw InputError("solve_ih needs an infinite-horizon problem");
  if (!is_unichain(spec.passive())) {
    throw InputError("infinite-horizon problem needs passive dynamics with a single closed class");
  }
  if (near_unit_order(spec.alpha())) return solve_ih_linear(spec);

  const auto n = spec.size();
  const auto& passive = spec.passive();
  const auto& q = spec.costs().running();
  const double a = spec.alpha() - 1.0;

  // Power iteration on diag(exp(a q)) P0, normalised so that max log z = 0.
  Vector lz(n, 0.0), next(n), scratch;
  double log_rho = 0.0;
  double prev_log_rho = kInf;
  double residual = kInf;
  std::size_t refinement_steps = 0;
  bool refined = false;
  std::size_t it = 0;
  for (it = 1; it <= options.max_iter; ++it) {
    log_matvec(passive, lz, {}, next, scratch);
    for (std::size_t x = 0; x < n; ++x) next[x] += a * q[x];
    log_rho = *std::max_element(next.begin(), next.end());
    residual = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      next[x] -= log_rho;
      residual = std::max(residual, std::abs(next[x] - lz[x]));
    }
    residual /= std::abs(a);
    std::swap(lz, next);
    if (!std::isfinite(residual) || !std::isfinite(log_rho)) {
      throw NumericalError("power iteration became non-finite");
    }
    const bool rho_settled = std::abs(log_rho - prev_log_rho) <= options.tol;
    prev_log_rho = log_rho;
    if (residual <= options.tol && rho_settled) break;
    if (!refined && options.refine_after > 0 && it == options.refine_after) {
      refined = true;
      refinement_steps = refine_perron(passive, q, a, lz);
    }
  }
  if (it > options.max_iter) {
    throw NumericalError("power iteration did not converge in " + std::to_string(options.max_iter) +
                         " iterations (residual " + fmt(residual) + ")");
  }

  Vector v(n);
  for (std::size_t x = 0; x < n; ++x) v[x] = lz[x] / a;
  const double v_min = *std::min_element(v.begin(), v.end());
  for (double& x : v) x -= v_min;

  Solution sol;
  sol.value.alpha = spec.alpha();
  sol.value.stages = {std::move(v)};
  sol.report.iterations = it;
  sol.report.refinement_steps = refinement_steps;
  sol.report.log_spectral_estimate = log_rho;
  sol.report.average_cost = log_rho / a;
  sol.report.final_residual = bellman_residual(spec, sol.value, sol.report.average_cost);
  sol.z = to_z_function(spec, sol.value);
  return sol;
}

Solution solve(const ProblemSpec& spec, const SolverOptions& options) {
  if (spec.is_finite_horizon()) return solve_fh(spec, options);
  if (spec.is_first_exit()) return solve_fe(spec, options);
  return solve_ih(spec, options);
}

Policy extract_policy(const ProblemSpec& spec, std::span<const double> v) {
  const auto& passive = spec.passive();
  const auto n = spec.size();
  if (v.size() != n) throw InputError("value function size does not match the problem");
  std::vector<std::vector<std::size_t>> cols(n);
  std::vector<std::vector<double>> probs(n);
  for (std::size_t x = 0; x < n; ++x) {
    const auto row = passive.row(x);
    cols[x].assign(row.cols.begin(), row.cols.end());
    auto& w = probs[x];
    w.resize(row.size());
    double max_lw = -kInf;
    for (std::size_t k = 0; k < row.size(); ++k) {
      w[k] = std::log(row.probs[k]) - v[row.cols[k]];
      max_lw = std::max(max_lw, w[k]);
    }
    double total = 0.0;
    for (double& lw : w) {
      lw = std::exp(lw - max_lw);
      total += lw;
    }
    for (double& p : w) p /= total;
  }
  return Policy{StochasticMatrix::from_rows(std::move(cols), std::move(probs), RowCheck::kStrict),
                spec.alpha()};
}

std::vector<Policy> extract_policies(const ProblemSpec& spec, const ValueFunction& value) {
  std::vector<Policy> out;
  if (spec.is_finite_horizon()) {
    for (std::size_t t = 0; t + 1 < value.stages.size(); ++t) {
      out.push_back(extract_policy(spec, value.stages[t + 1]));
    }
  } else {
    out.push_back(extract_policy(spec, value.values()));
  }
  return out;
}

ValueFunction evaluate_policy(const ProblemSpec& spec, std::span<const Policy> policies,
                              double alpha_eval, const SolverOptions& options) {
  if (spec.is_infinite_horizon()) {
    throw InputError("policy evaluation is only available for fh and fe problems");
  }
  if (policies.empty()) throw InputError("evaluate_policy needs at least one policy");
  const auto n = spec.size();
  const auto& passive = spec.passive();
  for (const auto& p : policies) check_policy_support(p, passive);

  // Rows of each policy aligned to the passive support, plus D_a(pi0 || pi).
  struct Aligned {
    std::vector<std::vector<double>> rows;
    Vector divergence;
  };
  std::vector<Aligned> aligned(policies.size());
  for (std::size_t k = 0; k < policies.size(); ++k) {
    auto& al = aligned[k];
    al.rows.resize(n);
    al.divergence.resize(n);
    for (std::size_t x = 0; x < n; ++x) {
      const auto prow = passive.row(x);
      auto& r = al.rows[x];
      r.resize(prow.size());
      for (std::size_t m = 0; m < prow.size(); ++m) r[m] = policies[k].kernel.at(x, prow.cols[m]);
      al.divergence[x] = renyi_divergence(prow.probs, r, alpha_eval);
    }
  }

  ValueFunction value;
  value.alpha = alpha_eval;
  std::vector<double> buf;
  auto backup = [&](const Aligned& al, std::size_t x, double qx, const Vector& next) {
    const auto prow = passive.row(x);
    buf.resize(prow.size());
    for (std::size_t m = 0; m < prow.size(); ++m) buf[m] = next[prow.cols[m]];
    return qx + al.divergence[x] + psi(al.rows[x], buf, alpha_eval);
  };

  if (spec.is_finite_horizon()) {
    const auto horizon = spec.horizon();
    if (policies.size() != 1 && policies.size() != horizon) {
      throw InputError("finite-horizon evaluation needs 1 or T policies");
    }
    value.stages.assign(horizon + 1, Vector(n));
    value.stages[horizon] = spec.final_cost();
    for (std::size_t t = horizon; t-- > 0;) {
      const auto& al = aligned[policies.size() == 1 ? 0 : t];
      const auto& q = spec.cost_at(t);
      for (std::size_t x = 0; x < n; ++x) {
        value.stages[t][x] = backup(al, x, q[x], value.stages[t + 1]);
      }
    }
    return value;
  }

  if (policies.size() != 1) throw InputError("first-exit evaluation needs one stationary policy");
  check_first_exit_reachability(spec);
  const auto active = non_terminal_mask(spec);
  const auto& q = spec.costs().running();
  Vector v(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    if (!active[x]) v[x] = spec.final_cost()[x];
  }
  Vector next(v);
  DivergenceMonitor monitor(options.divergence_window);
  double residual = kInf;
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    residual = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      if (!active[x]) continue;
      next[x] = backup(aligned[0], x, q[x], v);
      residual = std::max(residual, std::abs(next[x] - v[x]));
    }
    std::swap(v, next);
    if (!std::isfinite(residual)) throw NumericalError("policy evaluation became non-finite");
    if (residual <= options.tol) break;
    if (monitor.diverging(it, residual)) throw_diverged("policy evaluation", residual);
  }
  if (residual > options.tol) {
    throw NumericalError("policy evaluation did not converge (residual " + fmt(residual) + ")");
  }
  value.stages = {std::move(v)};
  return value;
}

ValueFunction evaluate_policy(const ProblemSpec& spec, const Policy& policy, double alpha_eval,
                              const SolverOptions& options) {
  return evaluate_policy(spec, std::span(&policy, 1), alpha_eval, options);
}

double bellman_residual(const ProblemSpec& spec, const ValueFunction& value, double average_cost) {
  const auto n = spec.size();
  const auto& passive = spec.passive();
  const double order = value.alpha - 1.0;
  std::vector<double> buf;
  double res = 0.0;
  auto check_size = [n](const Vector& v) {
    if (v.size() != n) throw InputError("value function size does not match the problem");
  };

  if (spec.is_finite_horizon()) {
    const auto horizon = spec.horizon();
    if (value.stages.size() != horizon + 1) throw InputError("expected T + 1 value stages");
    for (const auto& s : value.stages) check_size(s);
    for (std::size_t x = 0; x < n; ++x) {
      res = std::max(res, std::abs(value.stages[horizon][x] - spec.final_cost()[x]));
    }
    for (std::size_t t = 0; t < horizon; ++t) {
      const auto& q = spec.cost_at(t);
      for (std::size_t x = 0; x < n; ++x) {
        const double rhs = q[x] + row_psi(passive.row(x), value.stages[t + 1], order, buf);
        res = std::max(res, std::abs(rhs - value.stages[t][x]));
      }
    }
    return res;
  }

  const auto& v = value.values();
  check_size(v);
  const auto& q = spec.costs().running();
  const auto terminal = spec.terminal_mask();
  for (std::size_t x = 0; x < n; ++x) {
    if (terminal[x]) {
      res = std::max(res, std::abs(v[x] - spec.final_cost()[x]));
      continue;
    }
    const double rhs = q[x] + row_psi(passive.row(x), v, order, buf);
    res = std::max(res, std::abs(rhs - v[x] - average_cost));
  }
  return res;
}

}  // namespace rlc
