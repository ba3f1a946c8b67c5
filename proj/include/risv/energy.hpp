#ifndef RISV_ENERGY_HPP
#define RISV_ENERGY_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "discretization.hpp"
#include "error.hpp"

namespace risv {

enum class NonlinearityKind { none, doublewell, sine };

inline std::string_view to_string(NonlinearityKind k) {
  switch (k) {
    case NonlinearityKind::none: return "none";
    case NonlinearityKind::doublewell: return "doublewell";
    case NonlinearityKind::sine: return "sine";
  }
  return "none";
}

/// Scalar integrand f of F(z) = int f(z(x)) dx together with its growth data.
///
/// doublewell(a): r^4 - r^2 + 1 on [-1,1], patched C^2 to a |r|^a branch outside.
/// sine: sin(r) + 1.  none: f = 0.
class Nonlinearity {
public:
  static Nonlinearity none() { return Nonlinearity(NonlinearityKind::none, 0.0); }
  static Nonlinearity sine() { return Nonlinearity(NonlinearityKind::sine, 0.0); }
  static Nonlinearity doublewell(double a) {
    if (!(a > 2.0 && a < 2.5)) throw DomainError("doublewell: exponent a must lie in (2, 2.5)");
    return Nonlinearity(NonlinearityKind::doublewell, a);
  }

  NonlinearityKind kind() const { return kind_; }
  double a() const { return a_; }
  /// Growth constant: |f''(r)| <= gamma (1 + |r|^q) for all r.
  double gamma() const { return gamma_; }
  double q() const { return q_; }
  /// Hoelder exponent of f''.
  double s() const { return s_; }
  /// Modulus of continuity constant recorded for f'' (see holder_constant()).
  double holder_constant() const { return holder_; }

  double f(double r) const {
    switch (kind_) {
      case NonlinearityKind::none: return 0.0;
      case NonlinearityKind::sine: return std::sin(r) + 1.0;
      case NonlinearityKind::doublewell: {
        const double ar = std::abs(r);
        if (ar <= 1.0) return r * r * r * r - r * r + 1.0;
        return c1_ * std::pow(ar, a_) + c2_ * r * r + c3_;
      }
    }
    return 0.0;
  }

  double f_prime(double r) const {
    switch (kind_) {
      case NonlinearityKind::none: return 0.0;
      case NonlinearityKind::sine: return std::cos(r);
      case NonlinearityKind::doublewell: {
        const double ar = std::abs(r);
        if (ar <= 1.0) return 4.0 * r * r * r - 2.0 * r;
        return c1_ * a_ * std::pow(ar, a_ - 1.0) * (r > 0.0 ? 1.0 : -1.0) + 2.0 * c2_ * r;
      }
    }
    return 0.0;
  }

  double f_second(double r) const {
    switch (kind_) {
      case NonlinearityKind::none: return 0.0;
      case NonlinearityKind::sine: return -std::sin(r);
      case NonlinearityKind::doublewell: {
        const double ar = std::abs(r);
        if (ar <= 1.0) return 12.0 * r * r - 2.0;
        return c1_ * a_ * (a_ - 1.0) * std::pow(ar, a_ - 2.0) + 2.0 * c2_;
      }
    }
    return 0.0;
  }

private:
  Nonlinearity(NonlinearityKind kind, double a) : kind_(kind), a_(a) {
    switch (kind_) {
      case NonlinearityKind::none:
        q_ = 0.0; s_ = 1.0; gamma_ = 0.0; holder_ = 0.0;
        break;
      case NonlinearityKind::sine:
        // |sin| <= 1 gives the growth constant 1 with q = 0.
        q_ = 0.0; s_ = 1.0; holder_ = 1.0; gamma_ = 1.0;
        break;
      case NonlinearityKind::doublewell:
        c1_ = 8.0 / (a_ * (a_ - 2.0));
        c2_ = (a_ - 6.0) / (a_ - 2.0);
        c3_ = (4.0 * a_ - 8.0) / (a_ * (a_ - 2.0));
        q_ = a_ - 2.0; s_ = 2.0;
        // f''' is bounded by 24 on [-1,1] and by c1 a (a-1)(a-2) outside.
        holder_ = std::max(24.0, c1_ * a_ * (a_ - 1.0) * (a_ - 2.0));
        // |f''| / (1 + |r|^q) increases towards the tail coefficient of the |r|^a branch,
        // so the grid maximum is completed by that limit to give a global bound.
        gamma_ = std::max(measured_gamma(), c1_ * a_ * (a_ - 1.0));
        break;
    }
  }

  double measured_gamma() const {
    double best = 0.0;
    for (int i = -4000; i <= 4000; ++i) {
      const double r = 10.0 * i / 4000.0;
      best = std::max(best, std::abs(f_second(r)) / (1.0 + std::pow(std::abs(r), q_)));
    }
    for (int i = 0; i <= 400; ++i) {
      const double r = std::pow(10.0, 1.0 + 7.0 * i / 400.0);
      best = std::max(best, std::abs(f_second(r)) / (1.0 + std::pow(r, q_)));
    }
    return best;
  }

  NonlinearityKind kind_;
  double a_ = 0.0;
  double c1_ = 0.0, c2_ = 0.0, c3_ = 0.0;
  double gamma_ = 0.0, q_ = 0.0, s_ = 1.0, holder_ = 0.0;
};

/// Energy I(l, z) = 1/2 <Az, z> + F(z) + shift/2 ||z||_V^2 - <l, z>.
///
/// F uses nodal (lumped) quadrature with the mass entries as weights, so DF and
/// D^2F are diagonal and exact derivatives of F_eval. `shift` is the quadratic
/// V-penalty of the penalized energies I_eta and E_eta (zero by default).
class EnergyModel {
public:
  EnergyModel(DiscreteSpaces spaces, Nonlinearity nonlinearity, double shift = 0.0)
      : spaces_(std::move(spaces)), f_(nonlinearity), shift_(shift) {
    if (shift < 0.0) throw DomainError("EnergyModel: penalty shift must be nonnegative");
  }

  const DiscreteSpaces& spaces() const { return spaces_; }
  const Nonlinearity& nonlinearity() const { return f_; }
  Eigen::Index n() const { return spaces_.n(); }
  double shift() const { return shift_; }

  EnergyModel with_shift(double eta) const { return EnergyModel(spaces_, f_, eta); }

  double F(const Vector& z) const {
    check(z, "F_eval");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n(); ++i) acc += spaces_.mass()(i) * f_.f(z(i));
    return acc + 0.5 * shift_ * z.dot(spaces_.mass().cwiseProduct(z));
  }

  Vector DF(const Vector& z) const {
    check(z, "DF");
    Vector g(n());
    for (Eigen::Index i = 0; i < n(); ++i) g(i) = spaces_.mass()(i) * (f_.f_prime(z(i)) + shift_ * z(i));
    return g;
  }

  /// Diagonal of D^2F(z) as functional coefficients.
  Vector D2F_diag(const Vector& z) const {
    check(z, "D2F");
    Vector d(n());
    for (Eigen::Index i = 0; i < n(); ++i) d(i) = spaces_.mass()(i) * (f_.f_second(z(i)) + shift_);
    return d;
  }

  Vector D2F_apply(const Vector& z, const Vector& v) const {
    check(v, "D2F_apply");
    return D2F_diag(z).cwiseProduct(v);
  }

  double reduced_E(const Vector& z) const { return 0.5 * spaces_.stiffness().quad(z) + F(z); }

  double energy_I(const Vector& ell, const Vector& z) const {
    check(ell, "energy_I load");
    return reduced_E(z) - ell.dot(z);
  }

  Vector grad_I(const Vector& ell, const Vector& z) const {
    check(ell, "grad_I load");
    return spaces_.apply_stiffness(z) + DF(z) - ell;
  }

  /// D^2 E(z) = A + D^2F(z) as a tridiagonal operator.
  SymTridiagonal hessian_E(const Vector& z) const { return spaces_.stiffness().add_diagonal(D2F_diag(z)); }

  double hessian_form(const Vector& z, const Vector& v) const { return v.dot(hessian_E(z).apply(v)); }

private:
  void check(const Vector& z, const char* what) const { detail::require_size(z.size(), n(), what); }

  DiscreteSpaces spaces_;
  Nonlinearity f_;
  double shift_;
};

/// J_eta(t, l, z) = I(l, z) + eta/2 ||z - ztilde(t)||_V^2 with ztilde(t) passed as a vector.
inline double energy_penalized(const EnergyModel& model, double eta, const Vector& ztilde_t, const Vector& ell,
                               const Vector& z) {
  if (eta < 0.0) throw DomainError("energy_penalized: eta must be nonnegative");
  detail::require_size(ztilde_t.size(), model.n(), "energy_penalized ztilde");
  const Vector d = z - ztilde_t;
  return model.energy_I(ell, z) + 0.5 * eta * d.dot(model.spaces().mass().cwiseProduct(d));
}

inline Vector grad_penalized(const EnergyModel& model, double eta, const Vector& ztilde_t, const Vector& ell,
                             const Vector& z) {
  if (eta < 0.0) throw DomainError("grad_penalized: eta must be nonnegative");
  detail::require_size(ztilde_t.size(), model.n(), "grad_penalized ztilde");
  return model.grad_I(ell, z) + eta * model.spaces().to_dual(z - ztilde_t);
}

struct CoercivityConstants {
  double lambda;
  double mu;
  double nu;
};

/// Constants with ||z||_Z^2 <= lambda I(l,z) + mu ||l||_V*^2 and
/// ||z||_Z - nu (||l||_{H^1(0,T;V*)}^2 + 1) <= I(l(t), z).
inline CoercivityConstants coercivity_constants(const EnergyModel& model, double horizon = 1.0) {
  if (!(horizon > 0.0)) throw DomainError("coercivity_constants: horizon must be positive");
  const double alpha = model.spaces().alpha();
  const double c = model.spaces().embedding_vz();
  // Pointwise-in-time bound of H^1(0,T) functions: |u(t)|^2 <= (1/T + T) ||u||_{H^1}^2.
  const double c_time_sq = 1.0 / horizon + horizon;
  return {4.0 / alpha, 4.0 * c * c / (alpha * alpha), std::max(c * c * c_time_sq, 1.0) / alpha};
}

/// Penalty level making D^2 E_eta(z) >= alpha/2 ||.||_Z^2 for states of Z-norm at most `radius`.
inline double convexity_threshold(const EnergyModel& model, double radius) {
  if (!(radius > 0.0)) throw DomainError("convexity_threshold: radius must be positive");
  const Nonlinearity& f = model.nonlinearity();
  if (f.kind() == NonlinearityKind::none) return 0.0;
  const double alpha = model.spaces().alpha();
  const double g = f.gamma() * (1.0 + std::pow(radius, f.q()));
  return g * g / (2.0 * alpha);
}

} // namespace risv

#endif // RISV_ENERGY_HPP
