#ifndef RISV_DISCRETIZATION_HPP
#define RISV_DISCRETIZATION_HPP

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "error.hpp"
#include "tridiagonal.hpp"

namespace risv {

/// Finite-dimensional stand-in for the chain Z -> V -> X on an interval (0, L).
///
/// State vectors hold nodal values at the n interior nodes. Dual vectors
/// (loads, energy gradients) hold functional coefficients, so every pairing
/// <xi, z> is the plain dot product xi.dot(z); no Riesz map is ever applied
/// implicitly.
///
/// The Z-norm is defined through the stiffness, ||z||_Z^2 = z^T A z, so the
/// coercivity constant alpha equals 1 exactly.
class DiscreteSpaces {
public:
  /// P1 finite elements with homogeneous Dirichlet conditions and lumped mass.
  static DiscreteSpaces build(Eigen::Index n, double length, double kappa = 2.0) {
    if (n < 1) throw DomainError("build_spaces: need at least one interior node");
    if (!(length > 0.0)) throw DomainError("build_spaces: domain length must be positive");
    if (!(kappa >= 2.0 && kappa < 6.0)) throw DomainError("build_spaces: kappa must lie in [2, 6)");
    const double h = length / static_cast<double>(n + 1);
    SymTridiagonal stiffness(Vector::Constant(n, 2.0 / h), Vector::Constant(n - 1, -1.0 / h));
    return DiscreteSpaces(std::move(stiffness), Vector::Constant(n, h), Vector::Constant(n, h), h, length, kappa);
  }

  /// Arbitrary SPD stiffness with diagonal mass and dissipation weights; used
  /// for scalar oracles such as the play operator with A = M = omega = 1.
  static DiscreteSpaces custom(SymTridiagonal stiffness, Vector mass, Vector weights, double kappa = 2.0) {
    const Eigen::Index n = stiffness.size();
    if (n < 1) throw DomainError("custom spaces: empty stiffness");
    detail::require_size(mass.size(), n, "custom spaces mass");
    detail::require_size(weights.size(), n, "custom spaces weights");
    if ((mass.array() <= 0.0).any()) throw DomainError("custom spaces: mass must be positive");
    if ((weights.array() <= 0.0).any()) throw DomainError("custom spaces: weights must be positive");
    if (!TridiagonalLdlt(stiffness).positive()) throw DomainError("custom spaces: stiffness must be SPD");
    return DiscreteSpaces(std::move(stiffness), std::move(mass), std::move(weights), 1.0, static_cast<double>(n), kappa);
  }

  static DiscreteSpaces scalar(double stiffness, double mass, double weight) {
    return custom(SymTridiagonal::diagonal(Vector::Constant(1, stiffness)), Vector::Constant(1, mass),
                  Vector::Constant(1, weight));
  }

  Eigen::Index n() const { return stiffness_.size(); }
  double h() const { return h_; }
  double length() const { return length_; }
  double kappa() const { return kappa_; }
  double alpha() const { return 1.0; }
  const SymTridiagonal& stiffness() const { return stiffness_; }
  const Vector& mass() const { return mass_; }
  const Vector& weights() const { return weights_; }

  Vector apply_stiffness(const Vector& z) const { return stiffness_.apply(z); }
  Vector solve_stiffness(const Vector& xi) const { return stiffness_factor_.solve(xi); }

  /// Best constant C with ||z||_V <= C ||z||_Z (also ||xi||_Z* <= C ||xi||_V*).
  double embedding_vz() const { return c_vz_; }
  /// Best constant with max_i |z_i| <= C ||z||_Z.
  double embedding_inf_z() const { return c_inf_; }
  /// Constant with ||z||_X <= C ||z||_V (Cauchy-Schwarz on the weighted l1 sum).
  double embedding_xv() const { return std::sqrt((weights_.array().square() / mass_.array()).sum()); }
  /// Largest eigenvalue of A measured against M, i.e. ||A||_{Z -> Z*} in V-units.
  double stiffness_spectral_radius() const { return lambda_max_; }

  double norm_v(const Vector& z) const {
    check(z, "norm_v");
    return std::sqrt(z.dot(mass_.cwiseProduct(z)));
  }
  double norm_z(const Vector& z) const {
    check(z, "norm_z");
    return std::sqrt(std::max(0.0, stiffness_.quad(z)));
  }
  double norm_x(const Vector& z) const {
    check(z, "norm_x");
    return weights_.dot(z.cwiseAbs());
  }
  double norm_lkappa(const Vector& z) const {
    check(z, "norm_lkappa");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n(); ++i) acc += mass_(i) * std::pow(std::abs(z(i)), kappa_);
    return std::pow(acc, 1.0 / kappa_);
  }

  /// Norm of the tailored scalar product <z1,z2>_V + (delta/eps) <A z1, z2>.
  double norm_eps_delta(const Vector& z, double eps, double delta) const {
    if (!(eps > 0.0)) throw DomainError("norm_eps_delta: eps must be positive");
    if (delta < 0.0) throw DomainError("norm_eps_delta: delta must be nonnegative");
    check(z, "norm_eps_delta");
    return std::sqrt(z.dot(mass_.cwiseProduct(z)) + (delta / eps) * stiffness_.quad(z));
  }

  double dual_norm_vstar(const Vector& xi) const {
    check(xi, "dual_norm_vstar");
    return std::sqrt(xi.dot(xi.cwiseQuotient(mass_)));
  }
  double dual_norm_zstar(const Vector& xi) const {
    check(xi, "dual_norm_zstar");
    return std::sqrt(std::max(0.0, xi.dot(solve_stiffness(xi))));
  }

  /// V-Riesz map: the functional <z, .>_V.
  Vector to_dual(const Vector& z) const { return mass_.cwiseProduct(z); }

private:
  DiscreteSpaces(SymTridiagonal stiffness, Vector mass, Vector weights, double h, double length, double kappa)
      : stiffness_(std::move(stiffness)), stiffness_factor_(stiffness_), mass_(std::move(mass)),
        weights_(std::move(weights)), h_(h), length_(length), kappa_(kappa) {
    // Generalized eigenvalues of (A, M) through the symmetric scaling M^{-1/2} A M^{-1/2}.
    const Vector s = mass_.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd scaled = s.asDiagonal() * stiffness_.dense() * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled, Eigen::EigenvaluesOnly);
    c_vz_ = 1.0 / std::sqrt(eig.eigenvalues().minCoeff());
    lambda_max_ = eig.eigenvalues().maxCoeff();
    double max_diag = 0.0;
    for (Eigen::Index i = 0; i < n(); ++i) {
      max_diag = std::max(max_diag, solve_stiffness(Vector::Unit(n(), i))(i));
    }
    c_inf_ = std::sqrt(max_diag);
  }

  void check(const Vector& z, const char* what) const { detail::require_size(z.size(), n(), what); }

  SymTridiagonal stiffness_;
  TridiagonalLdlt stiffness_factor_;
  Vector mass_;
  Vector weights_;
  double h_;
  double length_;
  double kappa_;
  double c_vz_ = 0.0;
  double c_inf_ = 0.0;
  double lambda_max_ = 0.0;
};

inline DiscreteSpaces build_spaces(Eigen::Index n, double length, double kappa = 2.0) {
  return DiscreteSpaces::build(n, length, kappa);
}

/// Uniform grid t_k = k T / K on [0, T].
class TimeGrid {
public:
  TimeGrid(double horizon, Eigen::Index steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0)) throw DomainError("TimeGrid: final time must be positive");
    if (steps < 1) throw DomainError("TimeGrid: need at least one step");
  }
  double horizon() const { return horizon_; }
  Eigen::Index steps() const { return steps_; }
  Eigen::Index nodes() const { return steps_ + 1; }
  double tau() const { return horizon_ / static_cast<double>(steps_); }
  double t(Eigen::Index k) const {
    return k == steps_ ? horizon_ : horizon_ * static_cast<double>(k) / static_cast<double>(steps_);
  }
  bool operator==(const TimeGrid& o) const { return horizon_ == o.horizon_ && steps_ == o.steps_; }

private:
  double horizon_;
  Eigen::Index steps_;
};

} // namespace risv

#endif // RISV_DISCRETIZATION_HPP
