#ifndef RISV_TRIDIAGONAL_HPP
#define RISV_TRIDIAGONAL_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "error.hpp"

namespace risv {

using Vector = Eigen::VectorXd;

/// Symmetric tridiagonal matrix stored by its diagonal and first off-diagonal.
class SymTridiagonal {
public:
  SymTridiagonal() = default;
  SymTridiagonal(Vector diag, Vector off) : diag_(std::move(diag)), off_(std::move(off)) {
    if (diag_.size() > 0 && off_.size() != diag_.size() - 1) {
      throw DimensionError("SymTridiagonal: off-diagonal must have n-1 entries");
    }
  }

  static SymTridiagonal diagonal(const Vector& d) {
    return SymTridiagonal(d, Vector::Zero(std::max<Eigen::Index>(d.size() - 1, 0)));
  }

  Eigen::Index size() const { return diag_.size(); }
  const Vector& diag() const { return diag_; }
  const Vector& off() const { return off_; }

  double operator()(Eigen::Index i, Eigen::Index j) const {
    if (i == j) return diag_(i);
    if (j == i + 1) return off_(i);
    if (i == j + 1) return off_(j);
    return 0.0;
  }

  Vector apply(const Vector& x) const {
    detail::require_size(x.size(), size(), "SymTridiagonal::apply");
    const Eigen::Index n = size();
    Vector y = diag_.cwiseProduct(x);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      y(i) += off_(i) * x(i + 1);
      y(i + 1) += off_(i) * x(i);
    }
    return y;
  }

  double quad(const Vector& x) const { return x.dot(apply(x)); }

  /// a*this + b*other
  SymTridiagonal combine(double a, const SymTridiagonal& other, double b) const {
    detail::require_size(other.size(), size(), "SymTridiagonal::combine");
    return SymTridiagonal(a * diag_ + b * other.diag_, a * off_ + b * other.off_);
  }

  SymTridiagonal add_diagonal(const Vector& d) const {
    detail::require_size(d.size(), size(), "SymTridiagonal::add_diagonal");
    return SymTridiagonal(diag_ + d, off_);
  }

  /// Principal submatrix on the sorted index set `idx`. Dropping rows of a
  /// tridiagonal matrix keeps it tridiagonal; couplings across a gap are zero.
  SymTridiagonal principal(std::span<const Eigen::Index> idx) const {
    const auto m = static_cast<Eigen::Index>(idx.size());
    Vector d(m);
    Vector o = Vector::Zero(std::max<Eigen::Index>(m - 1, 0));
    for (Eigen::Index a = 0; a < m; ++a) {
      d(a) = diag_(idx[a]);
      if (a + 1 < m && idx[a + 1] == idx[a] + 1) o(a) = off_(idx[a]);
    }
    return SymTridiagonal(std::move(d), std::move(o));
  }

  /// Gershgorin bound on the spectral radius.
  double norm_bound() const {
    const Eigen::Index n = size();
    double best = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double r = std::abs(diag_(i));
      if (i > 0) r += std::abs(off_(i - 1));
      if (i + 1 < n) r += std::abs(off_(i));
      best = std::max(best, r);
    }
    return best;
  }

  Eigen::MatrixXd dense() const {
    const Eigen::Index n = size();
    Eigen::MatrixXd m = diag_.asDiagonal();
    for (Eigen::Index i = 0; i + 1 < n; ++i) m(i, i + 1) = m(i + 1, i) = off_(i);
    return m;
  }

private:
  Vector diag_;
  Vector off_;
};

/// LDL^T factorization of a symmetric tridiagonal matrix (no pivoting).
/// Only valid for positive definite input; `positive()` reports whether all pivots were > 0.
class TridiagonalLdlt {
public:
  explicit TridiagonalLdlt(const SymTridiagonal& a) : d_(a.size()), l_(std::max<Eigen::Index>(a.size() - 1, 0)) {
    const Eigen::Index n = a.size();
    positive_ = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double di = a.diag()(i);
      if (i > 0) di -= l_(i - 1) * l_(i - 1) * d_(i - 1);
      d_(i) = di;
      if (!(di > 0.0) || !std::isfinite(di)) {
        positive_ = false;
        return;
      }
      if (i + 1 < n) l_(i) = a.off()(i) / di;
    }
  }

  bool positive() const { return positive_; }

  Vector solve(const Vector& b) const {
    if (!positive_) throw SolverError("tridiagonal factorization is not positive definite", 0.0);
    detail::require_size(b.size(), d_.size(), "TridiagonalLdlt::solve");
    const Eigen::Index n = d_.size();
    Vector x = b;
    for (Eigen::Index i = 1; i < n; ++i) x(i) -= l_(i - 1) * x(i - 1);
    for (Eigen::Index i = 0; i < n; ++i) x(i) /= d_(i);
    for (Eigen::Index i = n - 2; i >= 0; --i) x(i) -= l_(i) * x(i + 1);
    return x;
  }

private:
  Vector d_;
  Vector l_;
  bool positive_ = false;
};

inline Vector solve_spd(const SymTridiagonal& a, const Vector& b) {
  return TridiagonalLdlt(a).solve(b);
}

} // namespace risv

#endif // RISV_TRIDIAGONAL_HPP
