#ifndef RISV_PATHS_HPP
#define RISV_PATHS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>

#include "discretization.hpp"
#include "error.hpp"

namespace risv {

using Matrix = Eigen::MatrixXd;

/// Time-sampled load l_k (functional coefficients), one column per grid node.
/// The derivative uses backward differences, with l'_0 := l'_1.
class LoadPath {
public:
  LoadPath(TimeGrid grid, Matrix values) : grid_(grid), values_(std::move(values)) {
    detail::require_size(values_.cols(), grid_.nodes(), "LoadPath columns");
  }

  static LoadPath zero(const TimeGrid& grid, Eigen::Index n) { return LoadPath(grid, Matrix::Zero(n, grid.nodes())); }

  static LoadPath from_function(const TimeGrid& grid, Eigen::Index n, const std::function<Vector(double)>& fn) {
    Matrix m(n, grid.nodes());
    for (Eigen::Index k = 0; k < grid.nodes(); ++k) {
      Vector col = fn(grid.t(k));
      detail::require_size(col.size(), n, "LoadPath::from_function");
      m.col(k) = col;
    }
    return LoadPath(grid, std::move(m));
  }

  /// Functional of the spatially constant field `base + rate * t`: coefficients mass_i * (base + rate t).
  static LoadPath ramp(const DiscreteSpaces& sp, const TimeGrid& grid, double rate, double base = 0.0) {
    return from_function(grid, sp.n(), [&](double t) -> Vector { return sp.mass() * (base + rate * t); });
  }

  const TimeGrid& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  Eigen::Index n() const { return values_.rows(); }
  Vector at(Eigen::Index k) const { return values_.col(k); }

  Vector derivative(Eigen::Index k) const {
    if (grid_.steps() == 0) return Vector::Zero(n());
    const Eigen::Index j = std::max<Eigen::Index>(k, 1);
    return (values_.col(j) - values_.col(j - 1)) / grid_.tau();
  }

  /// Linear interpolation at physical time t.
  Vector interpolate(double t) const {
    const double x = std::clamp(t / grid_.tau(), 0.0, static_cast<double>(grid_.steps()));
    const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x)), grid_.steps() - 1);
    const double th = x - static_cast<double>(k);
    return (1.0 - th) * values_.col(k) + th * values_.col(k + 1);
  }

  LoadPath operator+(const LoadPath& o) const { check(o); return LoadPath(grid_, values_ + o.values_); }
  LoadPath operator-(const LoadPath& o) const { check(o); return LoadPath(grid_, values_ - o.values_); }
  LoadPath operator*(double c) const { return LoadPath(grid_, c * values_); }

private:
  void check(const LoadPath& o) const {
    if (!(grid_ == o.grid_) || o.n() != n()) throw DimensionError("LoadPath: mismatched paths");
  }

  TimeGrid grid_;
  Matrix values_;
};

/// Time-sampled state z_k with velocities v_k. For k >= 1 the velocity is the
/// backward difference (z_k - z_{k-1}) / tau; v_0 is whatever the producer set
/// (the solver stores the initial velocity of the evolution law).
class StatePath {
public:
  StatePath(TimeGrid grid, Matrix values, Matrix velocities)
      : grid_(grid), values_(std::move(values)), velocities_(std::move(velocities)) {
    detail::require_size(values_.cols(), grid_.nodes(), "StatePath columns");
    detail::require_size(velocities_.cols(), grid_.nodes(), "StatePath velocity columns");
    detail::require_size(velocities_.rows(), values_.rows(), "StatePath velocity rows");
  }

  /// Velocities from backward differences, with v_0 := v_1.
  static StatePath from_values(const TimeGrid& grid, Matrix values) {
    detail::require_size(values.cols(), grid.nodes(), "StatePath columns");
    Matrix vel(values.rows(), values.cols());
    for (Eigen::Index k = 1; k < values.cols(); ++k) vel.col(k) = (values.col(k) - values.col(k - 1)) / grid.tau();
    vel.col(0) = vel.col(1);
    return StatePath(grid, std::move(values), std::move(vel));
  }

  static StatePath constant(const TimeGrid& grid, const Vector& z0) {
    return StatePath(grid, z0.replicate(1, grid.nodes()), Matrix::Zero(z0.size(), grid.nodes()));
  }

  const TimeGrid& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  const Matrix& velocities() const { return velocities_; }
  Eigen::Index n() const { return values_.rows(); }
  Vector at(Eigen::Index k) const { return values_.col(k); }
  Vector velocity(Eigen::Index k) const { return velocities_.col(k); }

  Vector interpolate(double t) const {
    const double x = std::clamp(t / grid_.tau(), 0.0, static_cast<double>(grid_.steps()));
    const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x)), grid_.steps() - 1);
    const double th = x - static_cast<double>(k);
    return (1.0 - th) * values_.col(k) + th * values_.col(k + 1);
  }

private:
  TimeGrid grid_;
  Matrix values_;
  Matrix velocities_;
};

/// Trapezoid weights w_k tau on the grid (half weights at both ends).
inline double trapezoid_weight(const TimeGrid& grid, Eigen::Index k) {
  return (k == 0 || k == grid.steps()) ? 0.5 * grid.tau() : grid.tau();
}

/// sup_t ||a(t) - b(t)||_Z over grid nodes.
inline double sup_distance_z(const DiscreteSpaces& sp, const StatePath& a, const StatePath& b) {
  if (!(a.grid() == b.grid())) throw DimensionError("sup_distance_z: grids differ");
  double best = 0.0;
  for (Eigen::Index k = 0; k < a.grid().nodes(); ++k) best = std::max(best, sp.norm_z(a.at(k) - b.at(k)));
  return best;
}

/// ||z||_{H^1(0,T;Z)} with trapezoid weights on values and backward-difference velocities.
inline double path_h1_z_norm(const DiscreteSpaces& sp, const StatePath& z) {
  const TimeGrid& g = z.grid();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < g.nodes(); ++k) {
    const Eigen::Index j = std::max<Eigen::Index>(k, 1);
    const Vector dv = (z.at(j) - z.at(j - 1)) / g.tau();
    acc += trapezoid_weight(g, k) * (std::pow(sp.norm_z(z.at(k)), 2) + std::pow(sp.norm_z(dv), 2));
  }
  return std::sqrt(acc);
}

} // namespace risv

#endif // RISV_PATHS_HPP
