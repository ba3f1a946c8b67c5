#ifndef RISV_STATE_SOLVER_HPP
#define RISV_STATE_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dissipation.hpp"
#include "energy.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "paths.hpp"

namespace risv {

/// ||l||_{H^1(0,T;V*)} with trapezoid weights on values and backward-difference derivatives.
inline double path_h1_vstar_norm(const DiscreteSpaces& sp, const LoadPath& ell) {
  const TimeGrid& g = ell.grid();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < g.nodes(); ++k) {
    acc += trapezoid_weight(g, k) *
           (std::pow(sp.dual_norm_vstar(ell.at(k)), 2) + std::pow(sp.dual_norm_vstar(ell.derivative(k)), 2));
  }
  return std::sqrt(acc);
}

struct SolverOptions {
  double inner_tol = 1e-10;     ///< on the velocity update, in ||.||_V (relative to 1 + ||v||_V)
  int max_inner = 10000;
  KernelOptions kernel{};
  bool strict_stability = false;  ///< reject initial data with -D_z I(l(0), z0) outside the stable set
  bool check_apriori = true;      ///< fail when the state leaves 10x the a priori bound
};

/// Diagnostic scalars of a solved path.
struct SolveReport {
  double energy_residual = 0.0;
  double rate_identity_residual = 0.0;
  double sup_z_norm = 0.0;
  double h1v_seminorm = 0.0;  ///< (int ||z'||_V^2)^{1/2}
  double h1z_seminorm = 0.0;  ///< (int |z'|_Z^2)^{1/2}
  double var_z = 0.0;
  double velocity0_norm = 0.0;  ///< ||v_1||_V, the first discrete velocity
  double load_h1_norm = 0.0;
  double dual_surrogate = 0.0;  ///< sup_t dist_V*(-D_z I) + eps ||z'||_V
  double stationarity_residual = 0.0;
  double apriori_bound = 0.0;
  int max_inner_iterations = 0;
};

struct SolveResult {
  StatePath path;
  SolveReport report;
};

namespace detail {

inline SymTridiagonal viscous_operator(const DiscreteSpaces& sp, const DissipationParams& p) {
  return sp.stiffness().combine(p.delta, SymTridiagonal::diagonal(sp.mass()), p.eps);
}

/// Adds multiples of M until the operator is positive definite.
inline SymTridiagonal make_positive(const SymTridiagonal& h, const Vector& mass) {
  if (TridiagonalLdlt(h).positive()) return h;
  double shift = 1e-8 * std::max(1.0, h.norm_bound()) / mass.maxCoeff();
  for (int i = 0; i < 200; ++i, shift *= 2.0) {
    SymTridiagonal trial = h.add_diagonal(shift * mass);
    if (TridiagonalLdlt(trial).positive()) return trial;
  }
  throw SolverError("could not regularize step operator", 0.0);
}

struct StepOutcome {
  Vector v;
  int iterations = 0;
  double residual = 0.0;
};

/// One implicit step of the exact scheme: minimize over v
///   R(v) + 1/2 v^T B v + (1/tau) I(l, z_prev + tau v),  B = eps M + delta A,
/// by proximal Newton steps whose subproblems are solved by minimize_l1_quadratic.
inline StepOutcome exact_step(const EnergyModel& model, const SymTridiagonal& bmat, const Vector& ell,
                              const Vector& z_prev, double tau, Vector v, const SolverOptions& opt,
                              Eigen::Index step) {
  const DiscreteSpaces& sp = model.spaces();
  auto phi = [&](const Vector& vv) {
    return R(sp, vv) + 0.5 * bmat.quad(vv) + model.energy_I(ell, z_prev + tau * vv) / tau;
  };
  const bool quadratic = model.nonlinearity().kind() == NonlinearityKind::none;
  StepOutcome out;
  out.residual = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_inner; ++it) {
    const Vector z = z_prev + tau * v;
    const Vector g = bmat.apply(v) + model.grad_I(ell, z);
    const SymTridiagonal h = make_positive(bmat.combine(1.0, model.hessian_E(z), tau), sp.mass());
    const Vector w = h.apply(v) - g;
    const Vector cand = minimize_l1_quadratic(h, w, sp.weights(), sp.mass(), opt.kernel).v;
    Vector d = cand - v;
    double alpha = 1.0;
    auto residual_at = [&](const Vector& vv) {
      return dist_subdifferential(sp, vv, -(bmat.apply(vv) + model.grad_I(ell, z_prev + tau * vv)));
    };
    // Full steps that reduce the stationarity residual without raising phi are taken;
    // otherwise Armijo backtracking on phi, with a rounding allowance since phi carries I / tau.
    const double f0 = quadratic ? 0.0 : phi(v);
    const double slack = 1e-14 * (1.0 + std::abs(f0));
    if (!quadratic && (residual_at(cand) >= out.residual || phi(cand) > f0 + slack)) {
      const double model_dec = g.dot(d) + R(sp, cand) - R(sp, v);
      while (alpha > 1e-12 && phi(v + alpha * d) > f0 + 1e-4 * alpha * std::min(model_dec, 0.0) + slack) alpha *= 0.5;
    }
    v += alpha * d;
    ++out.iterations;
    const double upd = alpha * sp.norm_v(d);
    const Vector xi = -(bmat.apply(v) + model.grad_I(ell, z_prev + tau * v));
    out.residual = dist_subdifferential(sp, v, xi);
    const double scale = std::max(1.0, sp.dual_norm_vstar(xi));
    if (upd <= opt.inner_tol * (1.0 + sp.norm_v(v)) && out.residual <= opt.inner_tol * scale) {
      out.v = std::move(v);
      return out;
    }
    if (quadratic && alpha == 1.0 && out.residual <= opt.inner_tol * scale) {
      out.v = std::move(v);
      return out;
    }
  }
  throw SolverError("implicit step: inner iteration did not converge", out.residual, step);
}

/// One implicit step with the Huber-smoothed dissipation, by damped Newton on the
/// stationarity equation grad R_sigma(v) + B v + D_z I(l, z_prev + tau v) = 0.
inline StepOutcome smoothed_step(const EnergyModel& model, const SymTridiagonal& bmat, const Vector& ell,
                                 const Vector& z_prev, double tau, double sigma, Vector v,
                                 const SolverOptions& opt, Eigen::Index step) {
  const DiscreteSpaces& sp = model.spaces();
  auto phi = [&](const Vector& vv) {
    return moreau_R(sp, vv, sigma) + 0.5 * bmat.quad(vv) + model.energy_I(ell, z_prev + tau * vv) / tau;
  };
  auto grad = [&](const Vector& vv) -> Vector {
    return moreau_R_grad(sp, vv, sigma) + bmat.apply(vv) + model.grad_I(ell, z_prev + tau * vv);
  };
  StepOutcome out;
  Vector g = grad(v);
  const double scale = std::max(1.0, sp.dual_norm_vstar(model.grad_I(ell, z_prev)));
  const double tol = std::min(opt.inner_tol, 1e-13) * scale;
  for (int it = 0; it < std::max(opt.max_inner, 1); ++it) {
    out.residual = sp.dual_norm_vstar(g);
    if (out.residual <= tol) {
      out.v = std::move(v);
      return out;
    }
    const Vector z = z_prev + tau * v;
    SymTridiagonal h = bmat.combine(1.0, model.hessian_E(z), tau).add_diagonal(moreau_R_hess_diag(sp, v, sigma));
    h = make_positive(h, sp.mass());
    const Vector d = -solve_spd(h, g);
    const double f0 = phi(v);
    const double slope = g.dot(d);
    double alpha = 1.0;
    Vector trial = v + d;
    Vector g_trial = grad(trial);
    // Full Newton steps are taken when they reduce the residual without raising phi; otherwise Armijo.
    const double slack = 1e-14 * (1.0 + std::abs(f0));
    if (sp.dual_norm_vstar(g_trial) >= out.residual || phi(trial) > f0 + slack) {
      while (alpha > 1e-14 && phi(v + alpha * d) > f0 + 1e-4 * alpha * slope + slack) alpha *= 0.5;
      trial = v + alpha * d;
      g_trial = grad(trial);
    }
    v = std::move(trial);
    g = std::move(g_trial);
    ++out.iterations;
    if (alpha <= 1e-14) break;
  }
  out.residual = sp.dual_norm_vstar(g);
  if (out.residual <= 1e3 * tol) {
    out.v = std::move(v);
    return out;
  }
  throw SolverError("smoothed implicit step did not converge", out.residual, step);
}

} // namespace detail

/// A priori bound on sup_t ||z(t)||_Z from the energy estimate with Gronwall.
inline double apriori_state_bound(const EnergyModel& model, const LoadPath& ell, const Vector& z0) {
  const CoercivityConstants c = coercivity_constants(model, ell.grid().horizon());
  const double l2 = std::pow(path_h1_vstar_norm(model.spaces(), ell), 2);
  const double i0 = std::abs(model.energy_I(ell.at(0), z0));
  return std::exp(0.5 * c.lambda * ell.grid().horizon()) * (i0 + 0.5 * (1.0 + c.mu) * l2) + c.nu * (l2 + 1.0);
}

/// Implicit incremental scheme for 0 in dR_{eps,delta}(z') + D_z I(l, z), z(0) = z0.
///
/// With params.sigma > 0 the dissipation R is replaced by its Huber envelope.
/// Every accepted step satisfies the discrete stationarity
///   0 in dR(v_k) + eps M v_k + delta A v_k + D_z I(l_k, z_k)
/// up to the inner tolerance.
inline SolveResult solve_ris(const EnergyModel& model, const LoadPath& ell, const Vector& z0,
                             const DissipationParams& params, const SolverOptions& opt = {}) {
  params.validate();
  const DiscreteSpaces& sp = model.spaces();
  detail::require_size(ell.n(), sp.n(), "solve_ris load");
  detail::require_size(z0.size(), sp.n(), "solve_ris initial state");
  const TimeGrid& grid = ell.grid();
  const double tau = grid.tau();
  const Vector xi0 = -model.grad_I(ell.at(0), z0);
  if (opt.strict_stability && !stable_set_check(sp, xi0)) {
    throw DomainError("solve_ris: initial state is not stable, dist_V* = " + std::to_string(dist_vstar(sp, xi0)));
  }

  const SymTridiagonal bmat = detail::viscous_operator(sp, params);
  Matrix values(sp.n(), grid.nodes());
  Matrix vel(sp.n(), grid.nodes());
  values.col(0) = z0;
  // The smoothed dissipation has no stable set; its initial velocity is recorded as zero.
  vel.col(0) = params.sigma > 0.0 ? Vector(Vector::Zero(sp.n())) : solve_velocity(sp, xi0, params, opt.kernel);

  SolveReport rep;
  rep.apriori_bound = apriori_state_bound(model, ell, z0);
  Vector v = Vector::Zero(sp.n());
  for (Eigen::Index k = 1; k < grid.nodes(); ++k) {
    const Vector z_prev = values.col(k - 1);
    const detail::StepOutcome st =
        params.sigma > 0.0
            ? detail::smoothed_step(model, bmat, ell.at(k), z_prev, tau, params.sigma, v, opt, k)
            : detail::exact_step(model, bmat, ell.at(k), z_prev, tau, v, opt, k);
    v = st.v;
    values.col(k) = z_prev + tau * v;
    vel.col(k) = v;
    rep.stationarity_residual = std::max(rep.stationarity_residual, st.residual);
    rep.max_inner_iterations = std::max(rep.max_inner_iterations, st.iterations);
    if (opt.check_apriori) {
      const double nz = sp.norm_z(values.col(k));
      if (!std::isfinite(nz) || nz > 10.0 * rep.apriori_bound) {
        throw SolverError("solve_ris: state left ten times the a priori bound", nz, k);
      }
    }
  }
  return {StatePath(grid, std::move(values), std::move(vel)), rep};
}

/// Max over grid nodes of the defect in the integrated energy equality
///   I(l(t), z(t)) + int R_{eps,delta}(z') + R*_{eps,delta}(-D_z I) = I(l(0), z0) - int <l', z>,
/// with the velocity constant on each cell and trapezoid rules for the pointwise terms.
inline double energy_balance_residual(const EnergyModel& model, const StatePath& path, const LoadPath& ell,
                                      const DissipationParams& params) {
  const DiscreteSpaces& sp = model.spaces();
  const TimeGrid& g = path.grid();
  std::vector<double> conj(static_cast<std::size_t>(g.nodes()));
  for (Eigen::Index k = 0; k < g.nodes(); ++k) {
    conj[static_cast<std::size_t>(k)] = conjugate_R_eps_delta(sp, -model.grad_I(ell.at(k), path.at(k)), params);
  }
  const double i0 = model.energy_I(ell.at(0), path.at(0));
  double dissipated = 0.0, work = 0.0, worst = 0.0;
  for (Eigen::Index k = 1; k < g.nodes(); ++k) {
    const Vector vk = (path.at(k) - path.at(k - 1)) / g.tau();
    dissipated += g.tau() * (R_eps_delta(sp, vk, params) +
                             0.5 * (conj[static_cast<std::size_t>(k - 1)] + conj[static_cast<std::size_t>(k)]));
    work += 0.5 * (ell.at(k) - ell.at(k - 1)).dot(path.at(k - 1) + path.at(k));
    const double defect = model.energy_I(ell.at(k), path.at(k)) + dissipated - i0 + work;
    worst = std::max(worst, std::abs(defect));
  }
  return worst;
}

/// Max defect of the rate identity
///   eps/2 ||z'(t)||_V^2 + delta/2 |z'(t)|_Z^2 + int D^2E(z)[z', z'] = int <l', z'>
/// (relative to the initial velocity), with cell-constant velocities.
inline double rate_energy_residual(const EnergyModel& model, const StatePath& path, const LoadPath& ell,
                                   const DissipationParams& params) {
  const DiscreteSpaces& sp = model.spaces();
  const TimeGrid& g = path.grid();
  auto kinetic = [&](const Vector& v) {
    return 0.5 * params.eps * v.dot(sp.mass().cwiseProduct(v)) + 0.5 * params.delta * sp.stiffness().quad(v);
  };
  const double k0 = kinetic(path.velocity(0));
  double curvature = 0.0, work = 0.0, worst = 0.0;
  for (Eigen::Index k = 1; k < g.nodes(); ++k) {
    const Vector vk = (path.at(k) - path.at(k - 1)) / g.tau();
    curvature += 0.5 * g.tau() * (model.hessian_form(path.at(k - 1), vk) + model.hessian_form(path.at(k), vk));
    work += (ell.at(k) - ell.at(k - 1)).dot(vk);
    worst = std::max(worst, std::abs(kinetic(vk) - k0 + curvature - work));
  }
  return worst;
}

/// Discrete total variation sum_k ||z_{k+1} - z_k||_Z.
inline double variation_z(const DiscreteSpaces& sp, const StatePath& path) {
  double acc = 0.0;
  for (Eigen::Index k = 1; k < path.grid().nodes(); ++k) acc += sp.norm_z(path.at(k) - path.at(k - 1));
  return acc;
}

/// Collects the a priori quantities of a solved path.
inline SolveReport apriori_audit(const EnergyModel& model, const StatePath& path, const LoadPath& ell,
                                 const DissipationParams& params) {
  const DiscreteSpaces& sp = model.spaces();
  const TimeGrid& g = path.grid();
  SolveReport r;
  double hv = 0.0, hz = 0.0;
  for (Eigen::Index k = 0; k < g.nodes(); ++k) {
    const Vector z = path.at(k);
    r.sup_z_norm = std::max(r.sup_z_norm, sp.norm_z(z));
    const Vector xi = -model.grad_I(ell.at(k), z);
    const Vector vk = k == 0 ? path.velocity(0) : Vector((z - path.at(k - 1)) / g.tau());
    r.dual_surrogate = std::max(r.dual_surrogate, dist_vstar(sp, xi) + params.eps * sp.norm_v(vk));
    if (k > 0) {
      hv += g.tau() * std::pow(sp.norm_v(vk), 2);
      hz += g.tau() * sp.stiffness().quad(vk);
    }
  }
  r.h1v_seminorm = std::sqrt(hv);
  r.h1z_seminorm = std::sqrt(std::max(0.0, hz));
  r.var_z = variation_z(sp, path);
  r.velocity0_norm = g.steps() >= 1 ? sp.norm_v(path.velocity(1)) : 0.0;
  r.load_h1_norm = path_h1_vstar_norm(sp, ell);
  r.apriori_bound = apriori_state_bound(model, ell, path.at(0));
  r.energy_residual = energy_balance_residual(model, path, ell, params);
  r.rate_identity_residual = rate_energy_residual(model, path, ell, params);
  return r;
}

/// Least-squares slope of log(y) against log(x).
inline double fit_order(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_order: need at least two matching samples");
  double mx = 0.0, my = 0.0;
  const auto m = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("fit_order: samples must be positive");
    mx += std::log(x[i]) / m;
    my += std::log(y[i]) / m;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

struct DeltaStudyRow {
  double delta;
  double sup_error;
};

struct DeltaStudy {
  double eps = 0.0;
  double reference_delta = 0.0;
  std::vector<DeltaStudyRow> rows;  ///< requested deltas, then the reference row (error 0)
  double order = 0.0;
  bool monotone = false;
};

/// sup_t ||z_{eps,delta} - z_eps||_Z for each delta against a reference solve with delta = min/100.
inline DeltaStudy delta_convergence_study(const EnergyModel& model, const LoadPath& ell, const Vector& z0,
                                          double eps, const std::vector<double>& deltas,
                                          const SolverOptions& opt = {}, unsigned workers = 1) {
  if (deltas.empty()) throw DomainError("delta_convergence_study: empty delta list");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0)) throw DomainError("delta_convergence_study: deltas must be positive");
    if (i > 0 && !(deltas[i] < deltas[i - 1])) throw DomainError("delta_convergence_study: deltas must decrease");
  }
  DeltaStudy study;
  study.eps = eps;
  study.reference_delta = deltas.back() / 100.0;
  std::vector<double> all = deltas;
  all.push_back(study.reference_delta);
  std::vector<StatePath> paths(all.size(), StatePath::constant(ell.grid(), z0));
  parallel_for(all.size(), workers, [&](std::size_t i) {
    paths[i] = solve_ris(model, ell, z0, DissipationParams{eps, all[i], 0.0}, opt).path;
  });
  const StatePath& ref = paths.back();
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const double e = sup_distance_z(model.spaces(), paths[i], ref);
    study.rows.push_back({all[i], e});
    if (i + 1 < all.size()) {
      xs.push_back(all[i]);
      ys.push_back(e);
    }
  }
  study.monotone = true;
  for (std::size_t i = 1; i < ys.size(); ++i) study.monotone = study.monotone && ys[i] < ys[i - 1];
  study.order = ys.size() >= 2 ? fit_order(xs, ys) : 0.0;
  return study;
}

} // namespace risv

#endif // RISV_STATE_SOLVER_HPP
