#pragma once

// Euler discretisation of a controlled Ito diffusion
//
//   dx = a(x) dt + B(x) (u dt + sigma dw)
//
// onto a rectangular lattice. The passive kernel from lattice point x is the
// Gaussian N(x + a(x) h, sigma^2 h B(x) B(x)^T) restricted to the lattice.

#include "rlc/model.hpp"

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace rlc {

/// `points` equally spaced lattice coordinates covering [low, high],
/// endpoints included.
struct GridAxis {
  double low = 0.0;
  double high = 1.0;
  std::size_t points = 2;

  double spacing() const { return (high - low) / static_cast<double>(points - 1); }
  double coordinate(std::size_t k) const { return low + spacing() * static_cast<double>(k); }
};

/// Row-major lattice: the last axis varies fastest, so on a 2-D grid the
/// state index of (i, j) is i * axes[1].points + j.
class Grid {
 public:
  explicit Grid(std::vector<GridAxis> axes);

  std::size_t dims() const { return axes_.size(); }
  std::size_t size() const { return size_; }
  const std::vector<GridAxis>& axes() const { return axes_; }

  std::vector<std::size_t> unravel(std::size_t index) const;
  std::size_t ravel(std::span<const std::size_t> multi) const;
  Eigen::VectorXd point(std::size_t index) const;

 private:
  std::vector<GridAxis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// How noise-free dimensions land on the lattice.
enum class DeterministicStep {
  kInterpolate,  ///< split between the two neighbouring lines, mean exact
  kNearest,      ///< all mass on the nearest line
};

struct DiffusionModel {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;
  /// d x m matrix B(x).
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> control_matrix;
  double sigma = 1.0;
  double h = 0.02;
  std::vector<GridAxis> axes;  ///< state bounds and lattice shape per dimension
  DeterministicStep deterministic = DeterministicStep::kInterpolate;

  /// Throws InputError unless h > 0, sigma > 0, every axis has >= 2 points
  /// and low < high.
  void check() const;
};

/// Gaussian truncation radius in standard deviations.
inline constexpr double kKernelTruncation = 4.0;

struct KernelRow {
  std::vector<std::size_t> cols;  ///< increasing state indices
  std::vector<double> probs;
};

/// Passive transition row from lattice point `index`.
///
/// Noisy dimensions (those with positive variance) get the Gaussian density
/// evaluated at lattice points within kKernelTruncation standard deviations
/// of the mean; points beyond the grid are clamped onto the boundary. The
/// noisy covariance block must be positive definite. Noise-free dimensions
/// are advanced to the mean, clamped to the bounds, and either split
/// linearly between the two neighbouring lattice lines (so the kernel mean
/// there is exact) or rounded to the nearest line.
KernelRow euler_kernel(const DiffusionModel& model, const Grid& grid, std::size_t index);

struct GridProblem {
  ProblemSpec spec;
  Grid grid;
};

GridProblem build_grid_problem(const DiffusionModel& model,
                               const std::function<double(const Eigen::VectorXd&)>& q,
                               HorizonKind kind, double alpha);

/// f(x) = exp(-v1 (x - 0.9)^2 / 2) + r exp(-v2 (x + 0.9)^2 / 2)
struct TerrainModel {
  double r = 0.95;
  double v1 = 12.5;
  double v2 = 3.4;
  double g = 9.81;

  double height(double x) const;
  double slope(double x) const;
};

struct HillCarOptions {
  TerrainModel terrain;
  double sigma = 2.0;
  double h = 0.02;
  std::size_t position_points = 101;
  std::size_t velocity_points = 101;
  double alpha = 0.0;
  DeterministicStep deterministic = DeterministicStep::kInterpolate;
};

/// Point mass on the terrain: state (p, v) in [-3, 3] x [-6, 6],
/// dp = v / sqrt(1 + f'(p)^2) dt, dv = -g f'(p) / sqrt(1 + f'(p)^2) dt + sigma dw.
DiffusionModel hill_car_model(const HillCarOptions& options);

/// Infinite-horizon hill-car problem with state cost q(p, v) = 1 - f(p).
GridProblem build_hill_car(const HillCarOptions& options);

}  // namespace rlc
