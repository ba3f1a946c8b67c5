#ifndef RISV_DISSIPATION_HPP
#define RISV_DISSIPATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "discretization.hpp"
#include "error.hpp"
#include "tridiagonal.hpp"

namespace risv {

/// Viscosities of R_{eps,delta}(v) = R(v) + eps/2 ||v||_V^2 + delta/2 |v|_Z^2 and the
/// Huber smoothing width sigma (0 = exact dissipation).
struct DissipationParams {
  double eps = 1e-2;
  double delta = 0.0;
  double sigma = 0.0;

  void validate() const {
    if (!(eps > 0.0)) throw DomainError("dissipation: eps must be positive");
    if (delta < 0.0) throw DomainError("dissipation: delta must be nonnegative");
    if (sigma < 0.0) throw DomainError("dissipation: sigma must be nonnegative");
  }
};

/// Convergence controls for the l1-plus-quadratic kernel.
struct KernelOptions {
  double tol = 1e-11;
  int max_iter = 100000;
};

/// Convergence controls for the box QP behind dist_zstar.
struct BoxQpOptions {
  double tol = 1e-10;
  int max_iter = 10000;
};

inline double R(const DiscreteSpaces& sp, const Vector& v) { return sp.norm_x(v); }

inline double R_eps_delta(const DiscreteSpaces& sp, const Vector& v, const DissipationParams& p) {
  return R(sp, v) + 0.5 * p.eps * v.dot(sp.mass().cwiseProduct(v)) + 0.5 * p.delta * sp.stiffness().quad(v);
}

/// Closest point of the stable box {|xi_i| <= omega_i} in any diagonal metric.
inline Vector project_stable(const DiscreteSpaces& sp, const Vector& xi) {
  detail::require_size(xi.size(), sp.n(), "project_stable");
  return xi.cwiseMax(-sp.weights()).cwiseMin(sp.weights());
}

inline double dist_vstar(const DiscreteSpaces& sp, const Vector& xi) {
  return sp.dual_norm_vstar(xi - project_stable(sp, xi));
}

inline bool stable_set_check(const DiscreteSpaces& sp, const Vector& xi) { return dist_vstar(sp, xi) == 0.0; }

/// V*-distance of xi to the subdifferential dR(v).
inline double dist_subdifferential(const DiscreteSpaces& sp, const Vector& v, const Vector& xi) {
  detail::require_size(v.size(), sp.n(), "dist_subdifferential");
  detail::require_size(xi.size(), sp.n(), "dist_subdifferential");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < sp.n(); ++i) {
    const double w = sp.weights()(i);
    double target;
    if (v(i) > 0.0) target = w;
    else if (v(i) < 0.0) target = -w;
    else target = std::clamp(xi(i), -w, w);
    const double d = xi(i) - target;
    acc += d * d / sp.mass()(i);
  }
  return std::sqrt(acc);
}

struct DistZResult {
  double distance = 0.0;
  Vector closest;      ///< minimizing element of the stable box
  int iterations = 0;
  double residual = 0.0;  ///< projected-gradient norm at exit
};

/// Z*-distance of xi to the stable box: min over the box of sqrt((xi-eta)^T A^{-1} (xi-eta)).
///
/// Projected gradient with Barzilai-Borwein steps, followed by an exact solve on the
/// identified free set.
inline DistZResult dist_zstar_detail(const DiscreteSpaces& sp, const Vector& xi, const BoxQpOptions& opt = {}) {
  detail::require_size(xi.size(), sp.n(), "dist_zstar");
  const Eigen::Index n = sp.n();
  const Vector& w = sp.weights();
  DistZResult out;
  Vector eta = project_stable(sp, xi);
  if ((eta - xi).cwiseAbs().maxCoeff() == 0.0) {
    out.closest = eta;
    return out;
  }
  auto project = [&](const Vector& x) { return x.cwiseMax(-w).cwiseMin(w); };
  auto grad = [&](const Vector& e) -> Vector { return 2.0 * sp.solve_stiffness(e - xi); };
  const double scale = std::max(1.0, sp.dual_norm_zstar(xi));

  Vector g = grad(eta);
  double step = 1.0 / (2.0 * sp.embedding_vz() * sp.embedding_vz() * sp.mass().maxCoeff());
  double pg = (eta - project(eta - g)).norm();
  int it = 0;
  for (; it < opt.max_iter && pg > opt.tol * scale; ++it) {
    Vector trial = project(eta - step * g);
    const Vector s = trial - eta;
    const Vector g_new = grad(trial);
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    eta = std::move(trial);
    g = g_new;
    step = sy > 0.0 ? s.squaredNorm() / sy : step;
    pg = (eta - project(eta - g)).norm();
  }

  // Exact polish on the free set.
  std::vector<Eigen::Index> free_idx, bound_idx;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(eta(i)) < w(i) * (1.0 - 1e-9)) free_idx.push_back(i);
    else bound_idx.push_back(i);
  }
  Vector polished = eta;
  for (Eigen::Index b : bound_idx) polished(b) = eta(b) > 0.0 ? w(b) : -w(b);
  if (!free_idx.empty()) {
    Eigen::MatrixXd q(n, n);
    for (Eigen::Index j = 0; j < n; ++j) q.col(j) = sp.solve_stiffness(Vector::Unit(n, j));
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    Eigen::MatrixXd qff(nf, nf);
    Vector rhs = Vector::Zero(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index c = 0; c < nf; ++c) qff(a, c) = q(free_idx[a], free_idx[c]);
      for (Eigen::Index b : bound_idx) rhs(a) -= q(free_idx[a], b) * (polished(b) - xi(b));
    }
    const Vector d = qff.ldlt().solve(rhs);
    for (Eigen::Index a = 0; a < nf; ++a) polished(free_idx[a]) = xi(free_idx[a]) + d(a);
  }
  const Vector pol_proj = project(polished);
  const double f_old = (xi - eta).dot(sp.solve_stiffness(xi - eta));
  const double f_new = (xi - pol_proj).dot(sp.solve_stiffness(xi - pol_proj));
  if (f_new <= f_old) {
    eta = pol_proj;
    g = grad(eta);
    pg = (eta - project(eta - g)).norm();
  }
  if (pg > opt.tol * scale) {
    throw SolverError("dist_zstar: box QP did not converge", pg, it);
  }
  out.closest = eta;
  out.distance = std::sqrt(std::max(0.0, (xi - eta).dot(sp.solve_stiffness(xi - eta))));
  out.iterations = it;
  out.residual = pg;
  return out;
}

inline double dist_zstar(const DiscreteSpaces& sp, const Vector& xi, const BoxQpOptions& opt = {}) {
  return dist_zstar_detail(sp, xi, opt).distance;
}

struct KernelResult {
  Vector v;
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

inline double soft(double x, double t) {
  const double a = std::abs(x) - t;
  return a > 0.0 ? (x > 0.0 ? a : -a) : 0.0;
}

/// || v - prox(v - c (Hv - w)) ||_V with the uniform step c = 1/||H||.
inline double prox_residual(const SymTridiagonal& hmat, const Vector& w, const Vector& weights, const Vector& mass,
                            const Vector& v, double c) {
  const Vector u = v - c * (hmat.apply(v) - w);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double d = v(i) - soft(u(i), c * weights(i));
    acc += mass(i) * d * d;
  }
  return std::sqrt(acc);
}

} // namespace detail

/// argmin_v  sum_i weights_i |v_i| + 1/2 v^T H v - w^T v  for symmetric positive definite tridiagonal H.
///
/// Diagonal H is solved by exact shrinkage. Otherwise a primal-dual active-set
/// (semismooth Newton) iteration on the prox fixed-point equation is used, which
/// terminates finitely for M-matrices; proximal-gradient steps take over if the
/// active set cycles. `mass` defines the V-norm of the reported residual.
inline KernelResult minimize_l1_quadratic(const SymTridiagonal& hmat, const Vector& w, const Vector& weights,
                                          const Vector& mass, const KernelOptions& opt = {}) {
  const Eigen::Index n = hmat.size();
  detail::require_size(w.size(), n, "minimize_l1_quadratic");
  detail::require_size(weights.size(), n, "minimize_l1_quadratic weights");
  KernelResult out;
  const bool diagonal = hmat.off().size() == 0 || hmat.off().cwiseAbs().maxCoeff() == 0.0;
  if (diagonal) {
    out.v.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(hmat.diag()(i) > 0.0)) throw SolverError("minimize_l1_quadratic: matrix not positive definite", 0.0);
      out.v(i) = detail::soft(w(i), weights(i)) / hmat.diag()(i);
    }
    return out;
  }
  const double lip = hmat.norm_bound();
  const double c_uniform = 1.0 / lip;
  const Vector cdiag = hmat.diag().cwiseInverse();
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = detail::soft(w(i), weights(i)) * cdiag(i);

  auto pdas = [&](Vector start, int max_sweeps, bool& ok) {
    std::set<std::vector<int>> seen;
    ok = false;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      const Vector u = start - cdiag.cwiseProduct(hmat.apply(start) - w);
      std::vector<int> pattern(static_cast<std::size_t>(n), 0);
      std::vector<Eigen::Index> active;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(u(i)) > cdiag(i) * weights(i)) {
          pattern[static_cast<std::size_t>(i)] = u(i) > 0.0 ? 1 : -1;
          active.push_back(i);
        }
      }
      if (!seen.insert(pattern).second) {
        ok = detail::prox_residual(hmat, w, weights, mass, start, c_uniform) <= opt.tol;
        return start;
      }
      Vector next = Vector::Zero(n);
      if (!active.empty()) {
        const SymTridiagonal sub = hmat.principal(active);
        Vector rhs(static_cast<Eigen::Index>(active.size()));
        for (std::size_t a = 0; a < active.size(); ++a) {
          const Eigen::Index i = active[a];
          rhs(static_cast<Eigen::Index>(a)) = w(i) - weights(i) * pattern[static_cast<std::size_t>(i)];
        }
        const TridiagonalLdlt fac(sub);
        if (!fac.positive()) return start;
        const Vector va = fac.solve(rhs);
        for (std::size_t a = 0; a < active.size(); ++a) next(active[a]) = va(static_cast<Eigen::Index>(a));
      }
      ++out.iterations;
      start = std::move(next);
      if (detail::prox_residual(hmat, w, weights, mass, start, c_uniform) <= opt.tol) {
        ok = true;
        return start;
      }
    }
    return start;
  };

  bool ok = false;
  v = pdas(v, 64, ok);
  int it = 0;
  while (!ok && it < opt.max_iter) {
    for (int k = 0; k < 50 && it < opt.max_iter; ++k, ++it) {
      const Vector u = v - c_uniform * (hmat.apply(v) - w);
      for (Eigen::Index i = 0; i < n; ++i) v(i) = detail::soft(u(i), c_uniform * weights(i));
    }
    out.iterations += 50;
    if (detail::prox_residual(hmat, w, weights, mass, v, c_uniform) <= opt.tol) {
      ok = true;
      break;
    }
    bool pdas_ok = false;
    Vector trial = pdas(v, 16, pdas_ok);
    if (pdas_ok) {
      v = std::move(trial);
      ok = true;
    }
  }
  out.residual = detail::prox_residual(hmat, w, weights, mass, v, c_uniform);
  out.v = std::move(v);
  if (!ok) throw SolverError("minimize_l1_quadratic: proximal iteration did not converge", out.residual);
  return out;
}

/// Velocity map v = dR*_{eps,delta}(w): argmin_v R(v) + eps/2 v^T M v + delta/2 v^T A v - w^T v.
inline Vector solve_velocity(const DiscreteSpaces& sp, const Vector& w, const DissipationParams& p,
                             const KernelOptions& opt = {}) {
  if (!(p.eps > 0.0)) throw DomainError("solve_velocity: eps must be positive");
  if (p.delta < 0.0) throw DomainError("solve_velocity: delta must be nonnegative");
  detail::require_size(w.size(), sp.n(), "solve_velocity");
  const SymTridiagonal hmat = p.delta > 0.0
                                  ? sp.stiffness().combine(p.delta, SymTridiagonal::diagonal(sp.mass()), p.eps)
                                  : SymTridiagonal::diagonal(p.eps * sp.mass());
  return minimize_l1_quadratic(hmat, w, sp.weights(), sp.mass(), opt).v;
}

/// R*_{eps,delta}(xi) evaluated through the velocity map (Fenchel-Young equality).
inline double conjugate_R_eps_delta(const DiscreteSpaces& sp, const Vector& xi, const DissipationParams& p,
                                    const KernelOptions& opt = {}) {
  const Vector v = solve_velocity(sp, xi, p, opt);
  return xi.dot(v) - R_eps_delta(sp, v, p);
}

/// Sampled Lipschitz ratio ||v(w1) - v(w2)||_V / ||w1 - w2||_V* of the velocity map.
inline double lipschitz_audit(const DiscreteSpaces& sp, const DissipationParams& p, int trials,
                              std::uint64_t seed = 1) {
  p.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index n = sp.n();
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Vector w1(n), w2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      w1(i) = 2.0 * sp.weights()(i) * normal(rng);
      w2(i) = (t % 4 == 0) ? w1(i) + 1e-3 * sp.weights()(i) * normal(rng) : 2.0 * sp.weights()(i) * normal(rng);
    }
    const double den = sp.dual_norm_vstar(w1 - w2);
    if (den == 0.0) continue;
    const double num = sp.norm_v(solve_velocity(sp, w1, p) - solve_velocity(sp, w2, p));
    worst = std::max(worst, num / den);
  }
  return worst;
}

/// Huber envelope of the weighted l1 dissipation: quadratic for |v_i| <= sigma, linear outside.
inline double moreau_R(const DiscreteSpaces& sp, const Vector& v, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("moreau_R: sigma must be positive");
  detail::require_size(v.size(), sp.n(), "moreau_R");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v(i));
    acc += sp.weights()(i) * (a <= sigma ? 0.5 * a * a / sigma : a - 0.5 * sigma);
  }
  return acc;
}

inline Vector moreau_R_grad(const DiscreteSpaces& sp, const Vector& v, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("moreau_R_grad: sigma must be positive");
  detail::require_size(v.size(), sp.n(), "moreau_R_grad");
  Vector g(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) g(i) = sp.weights()(i) * std::clamp(v(i) / sigma, -1.0, 1.0);
  return g;
}

/// Generalized second derivative (diagonal) of the Huber envelope.
inline Vector moreau_R_hess_diag(const DiscreteSpaces& sp, const Vector& v, double sigma) {
  Vector d(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) d(i) = std::abs(v(i)) < sigma ? sp.weights()(i) / sigma : 0.0;
  return d;
}

} // namespace risv

#endif // RISV_DISSIPATION_HPP
