#pragma once

// Renyi/KL divergences, the exponential certainty equivalent Psi, and the
// variational identity that makes the risk-sensitive Bellman equation linear.
//
// Conventions:
//   D_a(p||q)   = log(sum_x p^a q^(1-a)) / (a (a-1)),   a not in {0, 1}
//   D_0(p||q)   = KL(q||p),  D_1(p||q) = KL(p||q)
//   Psi^a_pi[f] = log(E_pi[exp(a f)]) / a,               Psi^0_pi[f] = E_pi[f]
//
// Everything is evaluated in the log domain with max-shift stabilisation.

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace rlc {

/// |alpha| (or |alpha - 1|) below this selects the analytic limit branch.
inline constexpr double kLimitThreshold = 1e-8;
/// Absolute tolerance on the total mass of a probability vector.
inline constexpr double kNormTolerance = 1e-12;

inline bool near_zero_order(double alpha) { return std::abs(alpha) < kLimitThreshold; }
inline bool near_unit_order(double alpha) { return std::abs(alpha - 1.0) < kLimitThreshold; }

/// A validated probability vector over a finite outcome set.
class Distribution {
 public:
  /// Throws InputError unless entries are finite, non-negative and sum to 1
  /// within kNormTolerance.
  explicit Distribution(std::vector<double> probs);

  /// Normalises a non-negative weight vector; throws if the total is zero.
  static Distribution normalized(std::vector<double> weights);

  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  bool operator==(const Distribution&) const = default;

 private:
  std::vector<double> probs_;
};

/// Mean vector and covariance of a multivariate normal.
struct GaussianParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

double renyi_divergence(const Distribution& p, const Distribution& q, double alpha);
double kl_divergence(const Distribution& p, const Distribution& q);
double psi(const Distribution& pi, std::span<const double> f, double alpha);

// Span versions operate on raw weight vectors (e.g. sparse transition rows
// gathered into dense buffers) and skip the normalisation check.
double renyi_divergence(std::span<const double> p, std::span<const double> q, double alpha);
double kl_divergence(std::span<const double> p, std::span<const double> q);
double psi(std::span<const double> pi, std::span<const double> f, double alpha);

/// Same as renyi_divergence but returns nullopt instead of throwing when
/// the support condition for this order is violated.
std::optional<double> try_renyi_divergence(std::span<const double> p, std::span<const double> q,
                                           double alpha);

struct VariationalSolution {
  Distribution minimizer;
  double value;
};

/// argmin and min over pi of D_a(pi0||pi) + Psi^a_pi[f].
///
/// The minimiser pi*(x) ~ pi0(x) exp(-f(x)) does not depend on alpha; the
/// minimum equals Psi^(a-1)_pi0[f].
VariationalSolution variational_minimizer(const Distribution& pi0, std::span<const double> f,
                                          double alpha);

/// Closed-form D_a between two normals with a shared covariance C:
/// (mu1 - mu2)^T C^-1 (mu1 - mu2) / 2, for every alpha.
double gaussian_renyi(const GaussianParams& g1, const GaussianParams& g2, double alpha);

}  // namespace rlc
