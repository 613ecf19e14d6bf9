#include "rlc/divergence.hpp"

#include "rlc/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace rlc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_size(std::size_t a, std::size_t b) {
  if (a != b) {
    throw InputError("distribution size mismatch: " + std::to_string(a) + " vs " +
                     std::to_string(b));
  }
}

void check_finite_alpha(double alpha) {
  if (!std::isfinite(alpha)) throw InputError("divergence order must be finite");
}

// log(sum_x w(x) exp(t(x))) over the outcomes flagged in `use`. Terms are
// recentred on a base exponent so that, when every exponent is small, the sum
// can be formed as 1 + (mass - 1) + sum w expm1(t) without cancellation.
template <typename WeightFn, typename ExpFn, typename UseFn>
double log_weighted_exp_sum(std::size_t n, WeightFn weight, ExpFn exponent, UseFn use) {
  double mass = 0.0;
  double max_abs = 0.0;
  double max_t = -kInf;
  for (std::size_t i = 0; i < n; ++i) {
    if (!use(i)) continue;
    const double t = exponent(i);
    mass += weight(i);
    max_abs = std::max(max_abs, std::abs(t));
    max_t = std::max(max_t, t);
  }
  if (max_t == -kInf) return -kInf;

  if (max_abs <= 1.0) {
    double excess = mass - 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (use(i)) excess += weight(i) * std::expm1(exponent(i));
    }
    if (std::abs(excess) < 0.5) return std::log1p(excess);
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (use(i)) sum += weight(i) * std::exp(exponent(i) - max_t);
  }
  return max_t + std::log(sum);
}

double kl_impl(std::span<const double> p, std::span<const double> q, std::size_t* violation) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) {
      *violation = i;
      return kInf;
    }
    sum += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(0.0, sum);
}

// Returns +inf and sets *violation when the order's support rule fails.
double renyi_impl(std::span<const double> p, std::span<const double> q, double alpha,
                  std::size_t* violation) {
  check_same_size(p.size(), q.size());
  check_finite_alpha(alpha);
  if (near_zero_order(alpha)) return kl_impl(q, p, violation);
  if (near_unit_order(alpha)) return kl_impl(p, q, violation);

  bool overlap = false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool has_p = p[i] > 0.0;
    const bool has_q = q[i] > 0.0;
    if ((alpha >= 1.0 && has_p && !has_q) || (alpha <= 0.0 && has_q && !has_p)) {
      *violation = i;
      return kInf;
    }
    overlap = overlap || (has_p && has_q);
  }
  if (!overlap) {
    *violation = p.size();
    return kInf;
  }

  auto both = [&](std::size_t i) { return p[i] > 0.0 && q[i] > 0.0; };
  double log_sum;
  if (alpha <= 0.5) {
    // sum q (p/q)^a
    log_sum = log_weighted_exp_sum(
        p.size(), [&](std::size_t i) { return q[i]; },
        [&](std::size_t i) { return alpha * (std::log(p[i]) - std::log(q[i])); }, both);
  } else {
    // sum p (q/p)^(1-a)
    log_sum = log_weighted_exp_sum(
        p.size(), [&](std::size_t i) { return p[i]; },
        [&](std::size_t i) { return (1.0 - alpha) * (std::log(q[i]) - std::log(p[i])); }, both);
  }
  return std::max(0.0, log_sum / (alpha * (alpha - 1.0)));
}

[[noreturn]] void throw_support(double alpha, std::size_t outcome, std::size_t n) {
  if (outcome >= n) {
    throw SupportError("renyi divergence of order " + std::to_string(alpha) +
                           " requires overlapping supports",
                       outcome);
  }
  throw SupportError("support violation at outcome " + std::to_string(outcome) +
                         " for divergence order " + std::to_string(alpha),
                     outcome);
}

}  // namespace

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InputError("distribution must have at least one outcome");
  double total = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (!std::isfinite(probs_[i]) || probs_[i] < 0.0) {
      throw InputError("distribution entry " + std::to_string(i) +
                       " is negative or non-finite");
    }
    total += probs_[i];
  }
  if (std::abs(total - 1.0) > kNormTolerance) {
    throw InputError("distribution sums to " + std::to_string(total) + ", expected 1");
  }
}

Distribution Distribution::normalized(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InputError("weights must be finite and >= 0");
    total += w;
  }
  if (total <= 0.0) throw InputError("cannot normalise an all-zero weight vector");
  for (double& w : weights) w /= total;
  return Distribution(std::move(weights));
}

double renyi_divergence(std::span<const double> p, std::span<const double> q, double alpha) {
  std::size_t violation = 0;
  const double d = renyi_impl(p, q, alpha, &violation);
  if (std::isinf(d)) throw_support(alpha, violation, p.size());
  return d;
}

double renyi_divergence(const Distribution& p, const Distribution& q, double alpha) {
  return renyi_divergence(p.probs(), q.probs(), alpha);
}

std::optional<double> try_renyi_divergence(std::span<const double> p, std::span<const double> q,
                                           double alpha) {
  std::size_t violation = 0;
  const double d = renyi_impl(p, q, alpha, &violation);
  if (std::isinf(d)) return std::nullopt;
  return d;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_same_size(p.size(), q.size());
  std::size_t violation = 0;
  const double d = kl_impl(p, q, &violation);
  if (std::isinf(d)) throw_support(1.0, violation, p.size());
  return d;
}

double kl_divergence(const Distribution& p, const Distribution& q) {
  return kl_divergence(p.probs(), q.probs());
}

double psi(std::span<const double> pi, std::span<const double> f, double alpha) {
  check_same_size(pi.size(), f.size());
  check_finite_alpha(alpha);
  double mass = 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] <= 0.0) continue;
    if (!std::isfinite(f[i])) {
      throw NumericalError("psi: non-finite value at outcome " + std::to_string(i) +
                           " inside the support");
    }
    mass += pi[i];
    weighted += pi[i] * f[i];
  }
  if (mass <= 0.0) throw InputError("psi: distribution has empty support");
  if (near_zero_order(alpha)) return weighted;

  // Psi is shift-equivariant; centring on the mean keeps the exponents small.
  const double centre = weighted / mass;
  const double tilt = log_weighted_exp_sum(
      pi.size(), [&](std::size_t i) { return pi[i]; },
      [&](std::size_t i) { return alpha * (f[i] - centre); },
      [&](std::size_t i) { return pi[i] > 0.0; });
  return centre + tilt / alpha;
}

double psi(const Distribution& pi, std::span<const double> f, double alpha) {
  return psi(pi.probs(), f, alpha);
}

VariationalSolution variational_minimizer(const Distribution& pi0, std::span<const double> f,
                                          double alpha) {
  check_same_size(pi0.size(), f.size());
  const double value = psi(pi0, f, alpha - 1.0);

  std::vector<double> log_w(pi0.size(), -kInf);
  double max_lw = -kInf;
  for (std::size_t i = 0; i < pi0.size(); ++i) {
    if (pi0[i] <= 0.0) continue;
    log_w[i] = std::log(pi0[i]) - f[i];
    max_lw = std::max(max_lw, log_w[i]);
  }
  std::vector<double> weights(pi0.size(), 0.0);
  for (std::size_t i = 0; i < pi0.size(); ++i) {
    if (pi0[i] > 0.0) weights[i] = std::exp(log_w[i] - max_lw);
  }
  return {Distribution::normalized(std::move(weights)), value};
}

double gaussian_renyi(const GaussianParams& g1, const GaussianParams& g2, double alpha) {
  check_finite_alpha(alpha);
  const auto dim = g1.mean.size();
  if (dim == 0 || g2.mean.size() != dim || g1.covariance.rows() != dim ||
      g1.covariance.cols() != dim || g2.covariance.rows() != dim || g2.covariance.cols() != dim) {
    throw InputError("gaussian_renyi: dimension mismatch");
  }
  if ((g1.covariance - g2.covariance).cwiseAbs().maxCoeff() > 1e-12) {
    throw InputError("gaussian_renyi: covariances differ; only the shared-covariance case is "
                     "supported");
  }
  const Eigen::MatrixXd& cov = g1.covariance;
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InputError("gaussian_renyi: covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0) {
    throw InputError("gaussian_renyi: covariance is not positive definite");
  }
  const Eigen::VectorXd diff = g1.mean - g2.mean;
  return 0.5 * diff.dot(cov.llt().solve(diff));
}

}  // namespace rlc
