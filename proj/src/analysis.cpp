#include "rlc/analysis.hpp"

#include "rlc/errors.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

namespace rlc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_weights(const Vector& w, std::size_t count) {
  if (count == 0) throw InputError("composition needs at least one component");
  if (w.size() != count) {
    throw InputError("expected " + std::to_string(count) + " weights, got " +
                     std::to_string(w.size()));
  }
  bool any = false;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) throw InputError("composition weights must be finite and >= 0");
    any = any || x > 0.0;
  }
  if (!any) throw InputError("at least one composition weight must be positive");
}

double sup_norm(const std::vector<Vector>& stages) {
  double m = 0.0;
  for (const auto& s : stages) {
    for (double x : s) m = std::max(m, std::abs(x));
  }
  return m;
}

CostModel replace_final(const CostModel& costs, Vector final_cost) {
  if (costs.is_time_varying()) return CostModel::time_varying(costs.running_stages(), std::move(final_cost));
  return CostModel(costs.running(), std::move(final_cost));
}

}  // namespace

CompositionResult compose(const CompositionRequest& req) {
  const auto& spec = req.spec;
  if (spec.is_infinite_horizon()) throw InputError("composition needs an fh or fe problem");
  if (near_unit_order(spec.alpha())) {
    throw InputError("z-space composition is undefined at alpha = 1; compose value functions");
  }
  const auto count = req.components.size();
  check_weights(req.weights, count);
  if (req.final_costs.size() != count) throw InputError("one final cost per component is required");
  const auto n = spec.size();
  const std::size_t stages = spec.is_finite_horizon() ? spec.horizon() + 1 : 1;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& c = req.components[i];
    if (c.alpha != spec.alpha()) throw InputError("component " + std::to_string(i) + " has a different alpha");
    if (c.log_stages.size() != stages) {
      throw InputError("component " + std::to_string(i) + " has the wrong number of stages");
    }
    for (const auto& s : c.log_stages) {
      if (s.size() != n) throw InputError("component " + std::to_string(i) + " has the wrong size");
    }
    if (req.final_costs[i].size() != n) {
      throw InputError("final cost " + std::to_string(i) + " has the wrong size");
    }
  }

  const double a = spec.alpha() - 1.0;
  auto log_mix = [&](auto&& term) {
    double m = -kInf;
    for (std::size_t i = 0; i < count; ++i) {
      if (req.weights[i] > 0.0) m = std::max(m, std::log(req.weights[i]) + term(i));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      if (req.weights[i] > 0.0) s += std::exp(std::log(req.weights[i]) + term(i) - m);
    }
    return m + std::log(s);
  };

  CompositionResult out;
  out.z.alpha = spec.alpha();
  out.z.log_stages.assign(stages, Vector(n));
  for (std::size_t t = 0; t < stages; ++t) {
    for (std::size_t x = 0; x < n; ++x) {
      out.z.log_stages[t][x] = log_mix([&](std::size_t i) { return req.components[i].log_stages[t][x]; });
    }
  }
  out.final_cost.resize(n);
  for (std::size_t x = 0; x < n; ++x) {
    out.final_cost[x] = log_mix([&](std::size_t i) { return a * req.final_costs[i][x]; }) / a;
  }

  const auto composite = spec.with_costs(replace_final(spec.costs(), out.final_cost));
  out.z.log_multiplier = to_z_function(composite, ValueFunction{{Vector(n, 0.0)}, spec.alpha()}).log_multiplier;
  out.value.alpha = spec.alpha();
  for (const auto& lz : out.z.log_stages) {
    Vector v(n);
    for (std::size_t x = 0; x < n; ++x) v[x] = lz[x] / a;
    out.value.stages.push_back(std::move(v));
  }
  out.residual = bellman_residual(composite, out.value);
  const double bound = kCompositionTolerance * std::max(1.0, sup_norm(out.value.stages));
  if (!(out.residual <= bound)) {
    throw NumericalError("composite z-function fails the Bellman check (residual " +
                         std::to_string(out.residual) + ")");
  }
  return out;
}

LinearCompositionResult compose_values(const LinearCompositionRequest& req) {
  const auto count = req.components.size();
  check_weights(req.weights, count);
  if (req.values.size() != count) throw InputError("one value function per component is required");
  const auto& base = req.components.front();
  if (base.is_infinite_horizon()) throw InputError("composition needs an fh or fe problem");
  if (!near_unit_order(base.alpha())) throw InputError("linear value composition needs alpha = 1");
  const auto n = base.size();
  std::size_t stages = 1;
  for (const auto& c : req.components) stages = std::max(stages, c.costs().stages());
  for (std::size_t i = 0; i < count; ++i) {
    const auto& c = req.components[i];
    if (c.passive() != base.passive() || c.kind() != base.kind() || c.alpha() != base.alpha()) {
      throw InputError("component " + std::to_string(i) + " differs in dynamics, kind or alpha");
    }
    if (req.values[i].stages.size() != req.values[0].stages.size()) {
      throw InputError("value function " + std::to_string(i) + " has the wrong number of stages");
    }
  }

  std::vector<Vector> running(stages, Vector(n, 0.0));
  Vector final_cost(n, 0.0);
  ValueFunction value;
  value.alpha = base.alpha();
  value.stages.assign(req.values[0].stages.size(), Vector(n, 0.0));
  for (std::size_t i = 0; i < count; ++i) {
    const double w = req.weights[i];
    const auto& c = req.components[i];
    for (std::size_t t = 0; t < stages; ++t) {
      for (std::size_t x = 0; x < n; ++x) running[t][x] += w * c.costs().running(t)[x];
    }
    for (std::size_t x = 0; x < n; ++x) final_cost[x] += w * c.final_cost()[x];
    for (std::size_t t = 0; t < value.stages.size(); ++t) {
      if (req.values[i].stages[t].size() != n) throw InputError("value function has the wrong size");
      for (std::size_t x = 0; x < n; ++x) value.stages[t][x] += w * req.values[i].stages[t][x];
    }
  }
  CostModel costs = stages > 1 ? CostModel::time_varying(std::move(running), std::move(final_cost))
                               : CostModel(std::move(running.front()), std::move(final_cost));
  LinearCompositionResult out{base.with_costs(std::move(costs)), std::move(value), 0.0};
  out.residual = bellman_residual(out.spec, out.value);
  const double bound = kCompositionTolerance * std::max(1.0, sup_norm(out.value.stages));
  if (!(out.residual <= bound)) {
    throw NumericalError("composite value function fails the Bellman check (residual " +
                         std::to_string(out.residual) + ")");
  }
  return out;
}

namespace {

std::mt19937_64 stream_for(std::uint64_t seed, std::size_t index) {
  const auto idx = static_cast<std::uint64_t>(index);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32)};
  return std::mt19937_64(seq);
}

double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

std::size_t draw(const RowView& row, double u) {
  double c = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    c += row.probs[k];
    if (u < c) return row.cols[k];
  }
  return row.cols.back();
}

TrajectorySample rollout(const ProblemSpec& spec, const StochasticMatrix& kernel,
                         const std::vector<bool>& terminal, std::size_t start,
                         const SamplingOptions& opt, std::size_t index) {
  auto rng = stream_for(opt.seed, index);
  TrajectorySample s;
  std::size_t x = start;
  if (opt.keep_states) s.states.push_back(x);
  auto step = [&] {
    x = draw(kernel.row(x), uniform01(rng));
    ++s.length;
    if (opt.keep_states) s.states.push_back(x);
  };

  if (spec.is_finite_horizon()) {
    for (std::size_t t = 0; t < spec.horizon(); ++t) {
      s.accumulated_cost += spec.cost_at(t)[x];
      step();
    }
    s.accumulated_cost += spec.final_cost()[x];
  } else if (spec.is_first_exit()) {
    s.terminated = false;
    if (terminal[x]) {
      s.accumulated_cost = spec.final_cost()[x];
      s.terminated = true;
      return s;
    }
    const auto& q = spec.costs().running();
    while (s.length < opt.t_max) {
      s.accumulated_cost += q[x];
      step();
      if (terminal[x]) {
        s.accumulated_cost += spec.final_cost()[x];
        s.terminated = true;
        break;
      }
    }
  } else {
    const auto& q = spec.costs().running();
    while (s.length < opt.t_max) {
      s.accumulated_cost += q[x];
      step();
    }
  }
  return s;
}

}  // namespace

std::vector<TrajectorySample> sample_trajectories(const ProblemSpec& spec,
                                                  const StochasticMatrix& kernel,
                                                  std::size_t start,
                                                  const SamplingOptions& options) {
  if (kernel.size() != spec.size()) throw InputError("sampling kernel size does not match the problem");
  if (start >= spec.size()) throw InputError("start state " + std::to_string(start) + " out of range");
  if (options.n == 0) throw InputError("sample count must be >= 1");
  const auto terminal = spec.is_first_exit() ? spec.terminal_mask() : std::vector<bool>();

  std::vector<TrajectorySample> out(options.n);
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) out[j] = rollout(spec, kernel, terminal, start, options, j);
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, options.n);
  if (threads == 1) {
    work(0, options.n);
    return out;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (options.n + threads - 1) / threads;
  for (std::size_t k = 0; k < threads; ++k) {
    const auto lo = k * chunk;
    const auto hi = std::min(options.n, lo + chunk);
    if (lo < hi) pool.emplace_back(work, lo, hi);
  }
  return out;
}

PathIntegralEstimate path_integral_estimate(const ProblemSpec& spec, std::size_t start,
                                            const SamplingOptions& options) {
  if (spec.is_infinite_horizon()) throw InputError("path-integral estimates need an fh or fe problem");
  SamplingOptions opt = options;
  opt.keep_states = false;
  const auto samples = sample_trajectories(spec, spec.passive(), start, opt);

  std::vector<double> costs;
  costs.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.terminated) costs.push_back(s.accumulated_cost);
  }
  PathIntegralEstimate est;
  est.truncated_fraction =
      static_cast<double>(samples.size() - costs.size()) / static_cast<double>(samples.size());
  est.used = costs.size();
  if (costs.empty()) throw NumericalError("every rollout hit t_max before reaching the terminal set");

  const auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
  if (*lo == *hi) {
    est.estimate = *lo;
    return est;
  }
  const double n = static_cast<double>(costs.size());
  auto mean_var = [n](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var = n > 1 ? var / (n - 1) : 0.0;
    return std::pair{mean, var};
  };

  if (near_unit_order(spec.alpha())) {
    const auto [mean, var] = mean_var(costs);
    est.estimate = mean;
    est.std_error = std::sqrt(var / n);
    return est;
  }
  const double a = spec.alpha() - 1.0;
  double shift = -kInf;
  for (double c : costs) shift = std::max(shift, a * c);
  std::vector<double> w(costs.size());
  for (std::size_t j = 0; j < costs.size(); ++j) w[j] = std::exp(a * costs[j] - shift);
  const auto [mean, var] = mean_var(w);
  est.estimate = (shift + std::log(mean)) / a;
  est.std_error = std::sqrt(var / n) / mean / std::abs(a);
  return est;
}

namespace {

double l1_step(const StochasticMatrix& kernel_t, const Vector& mu, Vector& mu_p) {
  const auto n = mu.size();
  double res = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto col = kernel_t.row(j);
    double s = 0.0;
    for (std::size_t k = 0; k < col.size(); ++k) s += col.probs[k] * mu[col.cols[k]];
    mu_p[j] = s;
    res += std::abs(s - mu[j]);
  }
  return res;
}

// mu (I - P) = 0 with the equation of one recurrent state swapped for
// sum mu = 1.
Vector direct_stationary(const StochasticMatrix& kernel_t, std::size_t anchor) {
  using Sparse = Eigen::SparseMatrix<double>;
  const auto n = kernel_t.size();
  const auto dim = static_cast<Eigen::Index>(n);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(kernel_t.nnz() + 2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (j == anchor) {
      for (Eigen::Index i = 0; i < dim; ++i) entries.emplace_back(jj, i, 1.0);
      continue;
    }
    entries.emplace_back(jj, jj, 1.0);
    const auto col = kernel_t.row(j);
    for (std::size_t k = 0; k < col.size(); ++k) {
      entries.emplace_back(jj, static_cast<Eigen::Index>(col.cols[k]), -col.probs[k]);
    }
  }
  Sparse m(dim, dim);
  m.setFromTriplets(entries.begin(), entries.end());
  m.makeCompressed();
  Eigen::SparseLU<Sparse> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) throw NumericalError("stationary linear system is singular");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  rhs(static_cast<Eigen::Index>(anchor)) = 1.0;
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !sol.allFinite()) {
    throw NumericalError("stationary linear solve failed");
  }
  Vector mu(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu[i] = std::max(0.0, sol(static_cast<Eigen::Index>(i)));
    total += mu[i];
  }
  for (double& x : mu) x /= total;
  return mu;
}

}  // namespace

StationaryResult stationary_distribution(const StochasticMatrix& kernel,
                                         const StationaryOptions& options) {
  const auto n = kernel.size();
  if (n == 0) throw InputError("empty chain");
  const auto classes = closed_classes(kernel);
  if (classes.size() != 1) {
    throw InputError("chain has " + std::to_string(classes.size()) +
                     " closed classes; the stationary distribution is not unique");
  }
  const auto kernel_t = kernel.transpose();
  Vector mu(n, 1.0 / static_cast<double>(n)), mu_p(n);
  StationaryResult out{Distribution({1.0}), kInf, 0, false};
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    const double res = l1_step(kernel_t, mu, mu_p);
    out.iterations = it;
    out.residual = res;
    if (res <= options.tol) break;
    if (options.direct_after > 0 && it == options.direct_after && !out.used_direct_solve) {
      out.used_direct_solve = true;
      mu = direct_stationary(kernel_t, classes.front().front());
      continue;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mu[i] = 0.5 * mu[i] + 0.5 * mu_p[i];
      total += mu[i];
    }
    for (double& x : mu) x /= total;
  }
  if (!(out.residual <= options.tol)) {
    throw NumericalError("stationary distribution did not converge (residual " +
                         std::to_string(out.residual) + ")");
  }
  out.mu = Distribution::normalized(std::move(mu));
  return out;
}

Policy adversary_policy(const ProblemSpec& spec, std::span<const double> v) {
  if (near_zero_order(spec.alpha())) throw InputError("the adversary is undefined at alpha = 0");
  const auto n = spec.size();
  if (v.size() != n) throw InputError("value function size does not match the problem");
  const double a = spec.alpha() - 1.0;
  const auto& passive = spec.passive();
  std::vector<std::vector<std::size_t>> cols(n);
  std::vector<std::vector<double>> probs(n);
  for (std::size_t x = 0; x < n; ++x) {
    const auto row = passive.row(x);
    cols[x].assign(row.cols.begin(), row.cols.end());
    auto& w = probs[x];
    w.resize(row.size());
    double top = -kInf;
    for (std::size_t k = 0; k < row.size(); ++k) {
      w[k] = std::log(row.probs[k]) + a * v[row.cols[k]];
      top = std::max(top, w[k]);
    }
    double total = 0.0;
    for (double& lw : w) {
      lw = std::exp(lw - top);
      total += lw;
    }
    for (double& p : w) p /= total;
  }
  return Policy{StochasticMatrix::from_rows(std::move(cols), std::move(probs), RowCheck::kStrict),
                spec.alpha()};
}

std::vector<std::vector<double>> simplex_lattice(std::size_t k, std::size_t m) {
  if (k == 0) throw InputError("simplex dimension must be >= 1");
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> parts(k, 0);
  // Enumerate compositions of m into k parts in lexicographic order.
  auto emit = [&] {
    std::vector<double> p(k);
    for (std::size_t i = 0; i < k; ++i) p[i] = static_cast<double>(parts[i]) / static_cast<double>(m);
    out.push_back(std::move(p));
  };
  auto rec = [&](auto&& self, std::size_t i, std::size_t left) -> void {
    if (i + 1 == k) {
      parts[i] = left;
      emit();
      return;
    }
    for (std::size_t c = 0; c <= left; ++c) {
      parts[i] = c;
      self(self, i + 1, left - c);
    }
  };
  rec(rec, 0, m);
  return out;
}

GameCheckReport game_bruteforce_check(const ProblemSpec& spec, const GameCheckOptions& options) {
  if (!spec.is_finite_horizon()) throw InputError("game check needs a finite-horizon problem");
  if (spec.size() > 4) throw InputError("game check is limited to at most 4 states");
  if (spec.horizon() > 3) throw InputError("game check is limited to T <= 3");
  const double alpha = spec.alpha();
  if (!(alpha >= kLimitThreshold)) throw InputError("game check needs alpha > 0");
  const double steps = 1.0 / options.grid_step;
  const auto m = static_cast<std::size_t>(std::llround(steps));
  if (!(options.grid_step > 0.0) || m == 0 || std::abs(steps - static_cast<double>(m)) > 1e-9 * steps) {
    throw InputError("grid_step must be 1/m for a positive integer m");
  }

  const auto n = spec.size();
  const auto horizon = spec.horizon();
  const auto& passive = spec.passive();
  std::vector<std::vector<std::vector<double>>> lattices(n + 1);
  std::size_t planned = 0;
  for (std::size_t x = 0; x < n; ++x) {
    const auto k = passive.row(x).size();
    // Lattice size is C(m + k - 1, k - 1); check before building it.
    double size = 1.0;
    for (std::size_t i = 1; i < k; ++i) size *= static_cast<double>(m + i) / static_cast<double>(i);
    const double pairs = size * size * static_cast<double>(horizon);
    if (pairs + static_cast<double>(planned) > static_cast<double>(options.max_evaluations)) {
      throw InputError("game check resource cap exceeded (" + std::to_string(options.max_evaluations) +
                       " evaluations); use a coarser grid_step");
    }
    planned += static_cast<std::size_t>(pairs);
    if (lattices[k].empty()) lattices[k] = simplex_lattice(k, m);
  }

  GameCheckReport report;
  report.solver = solve_fh(spec).value;
  auto& brute = report.brute_force;
  brute.alpha = alpha;
  brute.stages.assign(horizon + 1, Vector(n));
  brute.stages[horizon] = spec.final_cost();

  std::vector<double> next_vals;
  for (std::size_t t = horizon; t-- > 0;) {
    const auto& q = spec.cost_at(t);
    for (std::size_t x = 0; x < n; ++x) {
      const auto row = passive.row(x);
      const auto& lattice = lattices[row.size()];
      next_vals.resize(row.size());
      for (std::size_t k = 0; k < row.size(); ++k) next_vals[k] = brute.stages[t + 1][row.cols[k]];

      std::vector<unsigned> support(lattice.size(), 0);
      std::vector<double> expect(lattice.size(), 0.0);
      for (std::size_t p = 0; p < lattice.size(); ++p) {
        for (std::size_t k = 0; k < row.size(); ++k) {
          if (lattice[p][k] > 0.0) support[p] |= 1u << k;
          expect[p] += lattice[p][k] * next_vals[k];
        }
      }

      double best = kInf;
      for (std::size_t c = 0; c < lattice.size(); ++c) {
        const auto dc = options.order == GameCostOrder::kDisplayed
                            ? try_renyi_divergence(lattice[c], row.probs, alpha)
                            : try_renyi_divergence(row.probs, lattice[c], alpha);
        if (!dc) continue;
        double inner = -kInf;
        for (std::size_t p = 0; p < lattice.size(); ++p) {
          ++report.evaluations;
          if (support[p] & ~support[c]) continue;
          inner = std::max(inner, expect[p] - kl_divergence(lattice[p], lattice[c]) / alpha);
        }
        best = std::min(best, *dc + inner);
      }
      brute.stages[t][x] = q[x] + best;
    }
  }

  for (std::size_t t = 0; t <= horizon; ++t) {
    for (std::size_t x = 0; x < n; ++x) {
      report.gap = std::max(report.gap, std::abs(brute.stages[t][x] - report.solver.stages[t][x]));
    }
  }
  return report;
}

}  // namespace rlc
