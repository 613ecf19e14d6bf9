#include "rlc/discretizer.hpp"

#include "rlc/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <map>

namespace rlc {

Grid::Grid(std::vector<GridAxis> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw InputError("grid needs at least one axis");
  strides_.assign(axes_.size(), 1);
  size_ = 1;
  for (std::size_t d = axes_.size(); d-- > 0;) {
    if (axes_[d].points < 2) throw InputError("grid axes need at least 2 points");
    if (!(axes_[d].low < axes_[d].high)) throw InputError("grid axis bounds must satisfy low < high");
    strides_[d] = size_;
    size_ *= axes_[d].points;
  }
}

std::vector<std::size_t> Grid::unravel(std::size_t index) const {
  std::vector<std::size_t> multi(dims());
  for (std::size_t d = 0; d < dims(); ++d) {
    multi[d] = index / strides_[d];
    index %= strides_[d];
  }
  return multi;
}

std::size_t Grid::ravel(std::span<const std::size_t> multi) const {
  std::size_t index = 0;
  for (std::size_t d = 0; d < dims(); ++d) index += multi[d] * strides_[d];
  return index;
}

Eigen::VectorXd Grid::point(std::size_t index) const {
  const auto multi = unravel(index);
  Eigen::VectorXd x(static_cast<Eigen::Index>(dims()));
  for (std::size_t d = 0; d < dims(); ++d) x(static_cast<Eigen::Index>(d)) = axes_[d].coordinate(multi[d]);
  return x;
}

void DiffusionModel::check() const {
  if (!(h > 0.0) || !std::isfinite(h)) throw InputError("euler step h must be > 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("noise scale sigma must be > 0");
  if (!drift || !control_matrix) throw InputError("diffusion model needs drift and control matrix");
  if (axes.empty()) throw InputError("diffusion model needs state bounds");
  for (const auto& a : axes) {
    if (a.points < 2) throw InputError("grid_shape entries must be >= 2");
    if (!(a.low < a.high)) throw InputError("state bounds must satisfy low < high");
  }
}

namespace {

struct AxisWeights {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

// Linear split of a deterministic coordinate between neighbouring lines, or
// the nearest line.
AxisWeights interpolate(const GridAxis& axis, double x, DeterministicStep mode) {
  const double u = (std::clamp(x, axis.low, axis.high) - axis.low) / axis.spacing();
  if (mode == DeterministicStep::kNearest) {
    const auto k = std::min(static_cast<std::size_t>(std::lround(u)), axis.points - 1);
    return AxisWeights{{k}, {1.0}};
  }
  auto k = static_cast<std::size_t>(std::floor(u));
  k = std::min(k, axis.points - 2);
  const double t = std::clamp(u - static_cast<double>(k), 0.0, 1.0);
  AxisWeights w;
  if (t < 1.0) {
    w.index.push_back(k);
    w.weight.push_back(1.0 - t);
  }
  if (t > 0.0) {
    w.index.push_back(k + 1);
    w.weight.push_back(t);
  }
  return w;
}

}  // namespace

KernelRow euler_kernel(const DiffusionModel& model, const Grid& grid, std::size_t index) {
  const auto dims = grid.dims();
  const auto x = grid.point(index);
  const Eigen::VectorXd drift = model.drift(x);
  const Eigen::MatrixXd b = model.control_matrix(x);
  if (static_cast<std::size_t>(drift.size()) != dims || static_cast<std::size_t>(b.rows()) != dims) {
    throw InputError("drift/control matrix dimension does not match the grid");
  }
  const Eigen::VectorXd mean = x + drift * model.h;
  const Eigen::MatrixXd cov = model.sigma * model.sigma * model.h * (b * b.transpose());
  if (!mean.allFinite() || !cov.allFinite()) {
    throw InputError("non-finite drift or covariance at state " + std::to_string(index));
  }

  std::vector<std::size_t> noisy;
  std::vector<std::size_t> fixed;
  for (std::size_t d = 0; d < dims; ++d) {
    (cov(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) > 0.0 ? noisy : fixed).push_back(d);
  }

  // Lattice offsets and Gaussian weights over the noisy block.
  std::vector<std::vector<std::size_t>> noisy_points;  // clamped lattice indices per point
  std::vector<double> noisy_weights;
  if (!noisy.empty()) {
    const auto k = static_cast<Eigen::Index>(noisy.size());
    Eigen::MatrixXd sub(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) {
        sub(i, j) = cov(static_cast<Eigen::Index>(noisy[static_cast<std::size_t>(i)]),
                        static_cast<Eigen::Index>(noisy[static_cast<std::size_t>(j)]));
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sub);
    const double scale = sub.diagonal().maxCoeff();
    if (llt.info() != Eigen::Success ||
        llt.matrixLLT().diagonal().minCoeff() <= 1e-7 * std::sqrt(scale)) {
      throw InputError("degenerate covariance in the controlled dimensions at state " +
                       std::to_string(index));
    }

    std::vector<long> lo(noisy.size()), hi(noisy.size());
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      const auto& axis = grid.axes()[noisy[i]];
      const double m = mean(static_cast<Eigen::Index>(noisy[i]));
      const double s = std::sqrt(sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
      lo[i] = static_cast<long>(std::ceil((m - kKernelTruncation * s - axis.low) / axis.spacing() - 1e-9));
      hi[i] = static_cast<long>(std::floor((m + kKernelTruncation * s - axis.low) / axis.spacing() + 1e-9));
      if (lo[i] > hi[i]) lo[i] = hi[i] = std::lround((m - axis.low) / axis.spacing());
    }

    std::vector<long> cursor(lo);
    Eigen::VectorXd delta(k);
    while (true) {
      std::vector<std::size_t> clamped(noisy.size());
      for (std::size_t i = 0; i < noisy.size(); ++i) {
        const auto& axis = grid.axes()[noisy[i]];
        delta(static_cast<Eigen::Index>(i)) =
            axis.low + axis.spacing() * static_cast<double>(cursor[i]) -
            mean(static_cast<Eigen::Index>(noisy[i]));
        clamped[i] = static_cast<std::size_t>(
            std::clamp<long>(cursor[i], 0, static_cast<long>(axis.points) - 1));
      }
      noisy_weights.push_back(std::exp(-0.5 * delta.dot(llt.solve(delta))));
      noisy_points.push_back(std::move(clamped));

      std::size_t d = 0;
      while (d < noisy.size() && ++cursor[d] > hi[d]) {
        cursor[d] = lo[d];
        ++d;
      }
      if (d == noisy.size()) break;
    }
  } else {
    noisy_points.emplace_back();
    noisy_weights.push_back(1.0);
  }

  std::vector<AxisWeights> fixed_weights;
  for (auto d : fixed) fixed_weights.push_back(
      interpolate(grid.axes()[d], mean(static_cast<Eigen::Index>(d)), model.deterministic));

  std::map<std::size_t, double> row;
  std::vector<std::size_t> multi(dims);
  std::vector<std::size_t> cursor(fixed.size(), 0);
  while (true) {
    double wf = 1.0;
    for (std::size_t i = 0; i < fixed.size(); ++i) {
      multi[fixed[i]] = fixed_weights[i].index[cursor[i]];
      wf *= fixed_weights[i].weight[cursor[i]];
    }
    for (std::size_t p = 0; p < noisy_points.size(); ++p) {
      for (std::size_t i = 0; i < noisy.size(); ++i) multi[noisy[i]] = noisy_points[p][i];
      row[grid.ravel(multi)] += wf * noisy_weights[p];
    }
    std::size_t i = 0;
    while (i < fixed.size() && ++cursor[i] >= fixed_weights[i].index.size()) {
      cursor[i] = 0;
      ++i;
    }
    if (i == fixed.size()) break;
  }

  KernelRow out;
  double total = 0.0;
  for (const auto& [col, w] : row) total += w;
  if (!(total > 0.0)) throw NumericalError("empty kernel row at state " + std::to_string(index));
  for (const auto& [col, w] : row) {
    if (w <= 0.0) continue;
    out.cols.push_back(col);
    out.probs.push_back(w / total);
  }
  return out;
}

GridProblem build_grid_problem(const DiffusionModel& model,
                               const std::function<double(const Eigen::VectorXd&)>& q,
                               HorizonKind kind, double alpha) {
  model.check();
  Grid grid(model.axes);
  const auto n = grid.size();
  std::vector<std::vector<std::size_t>> cols(n);
  std::vector<std::vector<double>> probs(n);
  Vector costs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = euler_kernel(model, grid, i);
    cols[i] = std::move(row.cols);
    probs[i] = std::move(row.probs);
    costs[i] = q(grid.point(i));
  }
  auto passive = StochasticMatrix::from_rows(std::move(cols), std::move(probs), RowCheck::kStrict);
  ProblemSpec spec(StateSpace{n, {}}, std::move(passive), CostModel(std::move(costs)), alpha,
                   std::move(kind));
  return {std::move(spec), std::move(grid)};
}

double TerrainModel::height(double x) const {
  return std::exp(-v1 * (x - 0.9) * (x - 0.9) / 2.0) + r * std::exp(-v2 * (x + 0.9) * (x + 0.9) / 2.0);
}

double TerrainModel::slope(double x) const {
  return -v1 * (x - 0.9) * std::exp(-v1 * (x - 0.9) * (x - 0.9) / 2.0) -
         r * v2 * (x + 0.9) * std::exp(-v2 * (x + 0.9) * (x + 0.9) / 2.0);
}

DiffusionModel hill_car_model(const HillCarOptions& options) {
  const TerrainModel terrain = options.terrain;
  if (!(terrain.g > 0.0)) throw InputError("gravitational acceleration g must be > 0");
  DiffusionModel model;
  model.drift = [terrain](const Eigen::VectorXd& x) {
    const double fp = terrain.slope(x(0));
    const double norm = std::sqrt(1.0 + fp * fp);
    Eigen::VectorXd a(2);
    a << x(1) / norm, -terrain.g * fp / norm;
    return a;
  };
  model.control_matrix = [](const Eigen::VectorXd&) {
    Eigen::MatrixXd b(2, 1);
    b << 0.0, 1.0;
    return b;
  };
  model.sigma = options.sigma;
  model.h = options.h;
  model.deterministic = options.deterministic;
  model.axes = {GridAxis{-3.0, 3.0, options.position_points},
                GridAxis{-6.0, 6.0, options.velocity_points}};
  return model;
}

GridProblem build_hill_car(const HillCarOptions& options) {
  const TerrainModel terrain = options.terrain;
  return build_grid_problem(
      hill_car_model(options), [terrain](const Eigen::VectorXd& x) { return 1.0 - terrain.height(x(0)); },
      InfiniteHorizon{}, options.alpha);
}

}  // namespace rlc
