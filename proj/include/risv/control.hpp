#ifndef RISV_CONTROL_HPP
#define RISV_CONTROL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dissipation.hpp"
#include "energy.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "paths.hpp"
#include "state_solver.hpp"

namespace risv {

/// Optimal control of the viscous system through the load.
///   min  1/2 ||z(T) - z_des||_V^2 + beta/2 ||l||^2_{H^1(0,T;V*)}
///   s.t. -D_z I(l(0), z0) in dR(0),  dist_Z*(-D_z I(l(T), z(T)), dR(0)) <= end_tolerance
/// Without a target (z_des empty) the misfit term is dropped.
struct ControlProblem {
  EnergyModel model;
  Vector z0;
  TimeGrid grid{1.0, 1};
  DissipationParams params{};
  double beta = 1e-2;
  std::optional<Vector> z_des;
  double penalty_weight = 10.0;

  /// eps^{1/4}, plus delta^{1/4} for the doubly viscous variant.
  double end_tolerance() const {
    return std::pow(params.eps, 0.25) + (params.delta > 0.0 ? std::pow(params.delta, 0.25) : 0.0);
  }

  /// A z0 + DF(z0): the center of the box of admissible initial loads.
  Vector stable_center() const { return model.spaces().apply_stiffness(z0) + model.DF(z0); }

  ControlProblem with_params(const DissipationParams& p) const {
    ControlProblem c = *this;
    c.params = p;
    return c;
  }

  void validate() const {
    params.validate();
    if (!(beta > 0.0)) throw DomainError("control: beta must be positive");
    if (!(penalty_weight >= 0.0)) throw DomainError("control: penalty weight must be nonnegative");
    detail::require_size(z0.size(), model.n(), "control initial state");
    if (z_des) detail::require_size(z_des->size(), model.n(), "control target");
  }
};

struct Feasibility {
  double init_dist = 0.0;  ///< dist_V*(-D_z I(l(0), z0), dR(0))
  double end_dist = 0.0;   ///< dist_Z*(-D_z I(l(T), z(T)), dR(0))
};

namespace detail {

/// Time part of the H^1(0,T;V*) Gram operator: ||l||^2 = sum_i (1/m_i) L_i^T G L_i
/// for the time row L_i of node i, matching path_h1_vstar_norm.
inline SymTridiagonal time_gram(const TimeGrid& g) {
  const Eigen::Index m = g.nodes();
  Vector d(m), o = Vector::Zero(std::max<Eigen::Index>(m - 1, 0));
  for (Eigen::Index k = 0; k < m; ++k) d(k) = trapezoid_weight(g, k);
  const double t2 = g.tau() * g.tau();
  for (Eigen::Index k = 1; k < m; ++k) {
    // the derivative at node 0 is the first backward difference
    const double c = (k == 1 ? trapezoid_weight(g, 0) + trapezoid_weight(g, 1) : trapezoid_weight(g, k)) / t2;
    d(k) += c;
    d(k - 1) += c;
    o(k - 1) -= c;
  }
  return SymTridiagonal(d, o);
}

inline void check_load(const ControlProblem& p, const LoadPath& ell) {
  if (!(ell.grid() == p.grid)) throw DimensionError("control: load grid differs from the problem grid");
  detail::require_size(ell.n(), p.model.n(), "control load");
}

} // namespace detail

/// Gradient of 1/2 ||l||^2_{H^1(0,T;V*)} with respect to the coefficients of l.
inline Matrix h1_gram_apply(const DiscreteSpaces& sp, const TimeGrid& g, const Matrix& ell) {
  const SymTridiagonal gt = detail::time_gram(g);
  Matrix out(ell.rows(), ell.cols());
  for (Eigen::Index i = 0; i < ell.rows(); ++i) out.row(i) = gt.apply(ell.row(i).transpose()).transpose() / sp.mass()(i);
  return out;
}

/// Riesz representative in H^1(0,T;V*) of a coefficient gradient.
inline Matrix h1_riesz(const DiscreteSpaces& sp, const TimeGrid& g, const Matrix& grad) {
  const TridiagonalLdlt f(detail::time_gram(g));
  Matrix out(grad.rows(), grad.cols());
  for (Eigen::Index i = 0; i < grad.rows(); ++i) out.row(i) = f.solve(sp.mass()(i) * grad.row(i).transpose()).transpose();
  return out;
}

inline double h1_inner(const DiscreteSpaces& sp, const TimeGrid& g, const Matrix& a, const Matrix& b) {
  return (a.array() * h1_gram_apply(sp, g, b).array()).sum();
}

inline double terminal_misfit(const ControlProblem& p, const Vector& zT) {
  if (!p.z_des) return 0.0;
  const Vector d = zT - *p.z_des;
  return 0.5 * d.dot(p.model.spaces().to_dual(d));
}

/// J(z, l) = j(z(T)) + beta/2 ||l||^2_{H^1(0,T;V*)}.
inline double objective(const ControlProblem& p, const StatePath& z, const LoadPath& ell) {
  detail::check_load(p, ell);
  if (!(z.grid() == ell.grid())) throw DimensionError("objective: state and load grids differ");
  return terminal_misfit(p, z.at(z.grid().steps())) + 0.5 * p.beta * std::pow(path_h1_vstar_norm(p.model.spaces(), ell), 2);
}

inline Feasibility feasibility_residuals(const ControlProblem& p, const LoadPath& ell, const StatePath& z) {
  detail::check_load(p, ell);
  const DiscreteSpaces& sp = p.model.spaces();
  const Eigen::Index K = ell.grid().steps();
  return {dist_vstar(sp, -p.model.grad_I(ell.at(0), p.z0)), dist_zstar(sp, -p.model.grad_I(ell.at(K), z.at(K)))};
}

/// Clamps l(0) onto {xi : |xi_i - (A z0 + DF(z0))_i| <= omega_i}, exactly.
inline LoadPath project_initial_load(const ControlProblem& p, const LoadPath& ell) {
  detail::check_load(p, ell);
  const Vector c = p.stable_center();
  const Vector& w = p.model.spaces().weights();
  Matrix vals = ell.values();
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    double x = c(i) + std::clamp(vals(i, 0) - c(i), -w(i), w(i));
    while (x - c(i) > w(i)) x = std::nextafter(x, -std::numeric_limits<double>::infinity());
    while (c(i) - x > w(i)) x = std::nextafter(x, std::numeric_limits<double>::infinity());
    vals(i, 0) = x;
  }
  return LoadPath(ell.grid(), std::move(vals));
}

/// Smoothed reduced objective and its parts.
struct ReducedEvaluation {
  double value = 0.0;
  double misfit = 0.0;
  double tikhonov = 0.0;
  double penalty = 0.0;
  double end_dist = 0.0;
  StatePath path = StatePath::constant(TimeGrid(1.0, 1), Vector());
};

/// l -> J_sigma(z_sigma(l), l) + rho/2 max(0, end_dist - end_tolerance)^2 with z_sigma the
/// Huber-smoothed incremental solution.
inline ReducedEvaluation reduced_objective_smoothed(const ControlProblem& p, const LoadPath& ell,
                                                   const SolverOptions& opt = {}) {
  p.validate();
  detail::check_load(p, ell);
  if (!(p.params.sigma > 0.0)) throw DomainError("reduced objective needs sigma > 0");
  const DiscreteSpaces& sp = p.model.spaces();
  ReducedEvaluation e;
  e.path = solve_ris(p.model, ell, p.z0, p.params, opt).path;
  const Eigen::Index K = p.grid.steps();
  e.misfit = terminal_misfit(p, e.path.at(K));
  e.tikhonov = 0.5 * p.beta * std::pow(path_h1_vstar_norm(sp, ell), 2);
  e.end_dist = dist_zstar(sp, -p.model.grad_I(ell.at(K), e.path.at(K)));
  const double excess = std::max(0.0, e.end_dist - p.end_tolerance());
  e.penalty = 0.5 * p.penalty_weight * excess * excess;
  e.value = e.misfit + e.tikhonov + e.penalty;
  return e;
}

/// Coefficient gradient of the smoothed reduced objective by the discrete adjoint of
///   G_k(z_k, z_{k-1}, l_k) = grad R_sigma(v_k) + B v_k + A z_k + DF(z_k) - l_k = 0,  v_k = (z_k - z_{k-1})/tau.
inline Matrix reduced_gradient(const ControlProblem& p, const LoadPath& ell, const ReducedEvaluation& e) {
  const DiscreteSpaces& sp = p.model.spaces();
  const TimeGrid& g = p.grid;
  const Eigen::Index K = g.steps();
  const double tau = g.tau();
  const SymTridiagonal bmat = detail::viscous_operator(sp, p.params);
  Matrix grad = p.beta * h1_gram_apply(sp, g, ell.values());

  const Vector zK = e.path.at(K);
  Vector dz = Vector::Zero(sp.n());
  if (p.z_des) dz += sp.to_dual(zK - *p.z_des);
  const double excess = std::max(0.0, e.end_dist - p.end_tolerance());
  if (excess > 0.0 && p.penalty_weight > 0.0) {
    const Vector xi = -p.model.grad_I(ell.at(K), zK);
    const DistZResult dr = dist_zstar_detail(sp, xi);
    const Vector gx = sp.solve_stiffness(xi - dr.closest) / dr.distance;
    const double c = p.penalty_weight * excess;
    dz -= c * p.model.hessian_E(zK).apply(gx);
    grad.col(K) += c * gx;
  }

  auto coupling = [&](Eigen::Index k) {
    const SymTridiagonal c = bmat.add_diagonal(moreau_R_hess_diag(sp, e.path.velocity(k), p.params.sigma));
    return SymTridiagonal(c.diag() / tau, c.off() / tau);
  };
  Vector rhs = dz;
  for (Eigen::Index k = K; k >= 1; --k) {
    const SymTridiagonal ck = coupling(k);
    const SymTridiagonal hk = ck.combine(1.0, p.model.hessian_E(e.path.at(k)), 1.0);
    const TridiagonalLdlt f(hk);
    const Vector lam = f.positive() ? f.solve(rhs) : Vector(hk.dense().partialPivLu().solve(rhs));
    if (!lam.allFinite()) throw SolverError("adjoint solve failed", 0.0, k);
    grad.col(k) += lam;
    rhs = ck.apply(lam);
  }
  return grad;
}

inline Matrix reduced_gradient(const ControlProblem& p, const LoadPath& ell, const SolverOptions& opt = {}) {
  return reduced_gradient(p, ell, reduced_objective_smoothed(p, ell, opt));
}

struct GradientCheck {
  std::vector<double> relative_errors;
  double max_relative_error = 0.0;
};

/// Central differences of the smoothed reduced objective along `directions` standard
/// normal directions drawn from `seed`, against the adjoint pairing sum(grad .* d).
inline GradientCheck gradient_check(const ControlProblem& p, const LoadPath& ell, int directions, std::uint64_t seed,
                                    double step = 1e-6, const SolverOptions& opt = {}) {
  const Matrix g = reduced_gradient(p, ell, opt);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  GradientCheck out;
  for (int t = 0; t < directions; ++t) {
    Matrix d(ell.n(), ell.grid().nodes());
    for (Eigen::Index j = 0; j < d.cols(); ++j)
      for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, j) = nd(rng);
    const double jp = reduced_objective_smoothed(p, LoadPath(p.grid, ell.values() + step * d), opt).value;
    const double jm = reduced_objective_smoothed(p, LoadPath(p.grid, ell.values() - step * d), opt).value;
    const double fd = (jp - jm) / (2.0 * step);
    const double ex = (g.array() * d.array()).sum();
    out.relative_errors.push_back(std::abs(fd - ex) / std::max(std::abs(ex), 1e-12));
    out.max_relative_error = std::max(out.max_relative_error, out.relative_errors.back());
  }
  return out;
}

struct PenaltySchedule {
  double factor = 10.0;
  int max_rounds = 6;
  std::vector<double> sigmas{1e-2, 1e-3, 1e-4};
};

struct OptimizerOptions {
  int max_iterations = 500;  ///< per penalty round
  double gradient_tol = 1e-9;
  double min_step = 1e-14;
  PenaltySchedule schedule{};
  SolverOptions solver{};
};

struct PenaltyRound {
  double penalty_weight = 0.0;
  double sigma = 0.0;
  int iterations = 0;
  double smoothed_value = 0.0;
  double penalty_term = 0.0;
  double J = 0.0;  ///< unsmoothed objective at the round's load
  double end_dist = 0.0;
  double stationarity = 0.0;
  int nonmonotone_steps = 0;  ///< accepted steps that raised the stationarity measure
  bool stalled = false;       ///< line search gave up before the gradient tolerance
};

struct OptimizationResult {
  LoadPath ell_star = LoadPath::zero(TimeGrid(1.0, 1), 0);
  StatePath z_star = StatePath::constant(TimeGrid(1.0, 1), Vector());
  double J_star = 0.0;
  std::vector<double> gradient_norm_history;  ///< projected-gradient H^1 norm at each accepted iterate
  std::vector<std::size_t> round_starts;      ///< history index where each penalty round begins
  Feasibility feasibility;
  double end_tolerance = 0.0;
  int iterations = 0;
  int nonmonotone_steps = 0;
  std::vector<PenaltyRound> rounds;
  bool feasible = false;
};

namespace detail {

struct InnerOutcome {
  LoadPath ell;
  int iterations = 0;
  int nonmonotone_steps = 0;
  bool stalled = false;
  ReducedEvaluation eval;
  double stationarity = 0.0;
};

/// Riesz map restricted to loads whose l(0) entries vanish on the masked nodes.
inline Matrix masked_riesz(const DiscreteSpaces& sp, const TimeGrid& g, const Matrix& grad,
                           const std::vector<bool>& fixed0) {
  const SymTridiagonal gt = time_gram(g);
  SymTridiagonal gm = gt;
  if (gm.size() > 1) {
    Vector d = gt.diag(), o = gt.off();
    d(0) = 1.0;
    o(0) = 0.0;
    gm = SymTridiagonal(d, o);
  }
  const TridiagonalLdlt full(gt), masked(gm);
  Matrix out(grad.rows(), grad.cols());
  for (Eigen::Index i = 0; i < grad.rows(); ++i) {
    Vector rhs = sp.mass()(i) * grad.row(i).transpose();
    if (fixed0[static_cast<std::size_t>(i)]) {
      rhs(0) = 0.0;
      out.row(i) = masked.solve(rhs).transpose();
    } else {
      out.row(i) = full.solve(rhs).transpose();
    }
  }
  return out;
}

/// Nodes whose l(0) entry sits on the stable-box boundary with the gradient pushing outward.
inline std::vector<bool> binding_initial(const ControlProblem& p, const LoadPath& ell, const Matrix& grad) {
  const Vector c = p.stable_center();
  const Vector& w = p.model.spaces().weights();
  std::vector<bool> b(static_cast<std::size_t>(c.size()));
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double x = ell.values()(i, 0) - c(i), tol = 1e-12 * (w(i) + std::abs(c(i)));
    b[static_cast<std::size_t>(i)] = (x >= w(i) - tol && grad(i, 0) < 0.0) || (x <= -w(i) + tol && grad(i, 0) > 0.0);
  }
  return b;
}

inline void zero_fixed(Matrix& m, const std::vector<bool>& fixed0) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (fixed0[static_cast<std::size_t>(i)]) m(i, 0) = 0.0;
}

/// Stationarity measure: H^1(0,T;V*)-dual norm of the gradient restricted to the directions
/// that keep binding l(0) entries fixed. Vanishes exactly at KKT points of the box constraint.
inline double projected_gradient_norm(const ControlProblem& p, const LoadPath& ell, const Matrix& grad) {
  const std::vector<bool> fixed0 = binding_initial(p, ell, grad);
  Matrix g = grad;
  zero_fixed(g, fixed0);
  return std::sqrt(std::max(0.0, (g.array() * masked_riesz(p.model.spaces(), p.grid, g, fixed0).array()).sum()));
}

/// Limited-memory BFGS direction in the H^1(0,T;V*) metric (two-loop recursion) on the
/// subspace that keeps binding l(0) entries fixed.
inline Matrix lbfgs_direction(const DiscreteSpaces& sp, const TimeGrid& g, Matrix grad, std::vector<Matrix> s,
                              std::vector<Matrix> y, const std::vector<bool>& fixed0) {
  auto dot = [](const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); };
  zero_fixed(grad, fixed0);
  for (std::size_t i = s.size(); i-- > 0;) {
    zero_fixed(s[i], fixed0);
    zero_fixed(y[i], fixed0);
    if (!(dot(s[i], y[i]) > 0.0)) {
      s.erase(s.begin() + static_cast<std::ptrdiff_t>(i));
      y.erase(y.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
  Matrix q = grad;
  std::vector<double> a(s.size());
  for (std::size_t i = s.size(); i-- > 0;) {
    a[i] = dot(s[i], q) / dot(s[i], y[i]);
    q -= a[i] * y[i];
  }
  Matrix r = masked_riesz(sp, g, q, fixed0);
  if (!s.empty()) {
    const Matrix& yl = y.back();
    r *= dot(s.back(), yl) / dot(yl, masked_riesz(sp, g, yl, fixed0));
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double b = dot(y[i], r) / dot(s[i], y[i]);
    r += (a[i] - b) * s[i];
  }
  zero_fixed(r, fixed0);
  return -r;
}

/// Projected L-BFGS in the H^1(0,T;V*) metric with backtracking. Steps satisfying Armijo that
/// do not increase the stationarity measure are preferred; when neither the quasi-Newton nor
/// the gradient direction offers one (negative curvature), the first Armijo step is taken and
/// counted as nonmonotone.
inline InnerOutcome descend(const ControlProblem& p, LoadPath ell, const OptimizerOptions& opt,
                            std::vector<double>& history) {
  const DiscreteSpaces& sp = p.model.spaces();
  InnerOutcome out{ell, 0, 0, false, reduced_objective_smoothed(p, ell, opt.solver), 0.0};
  Matrix grad = reduced_gradient(p, ell, out.eval);
  double chi = projected_gradient_norm(p, ell, grad);
  history.push_back(chi);
  const double target = opt.gradient_tol * std::max(1.0, chi);
  std::vector<Matrix> mem_s, mem_y;
  struct Candidate {
    LoadPath ell;
    ReducedEvaluation eval;
    Matrix grad;
    double chi;
  };
  for (int it = 0; it < opt.max_iterations && chi > target; ++it) {
    std::optional<Candidate> accepted, fallback;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      const bool quasi = attempt == 0 && !mem_s.empty();
      const std::vector<bool> fixed0 = binding_initial(p, ell, grad);
      const std::vector<Matrix> none;
      const Matrix dir = lbfgs_direction(sp, p.grid, grad, quasi ? mem_s : none, quasi ? mem_y : none, fixed0);
      if ((grad.array() * dir.array()).sum() < 0.0) {
        int extra = 0;
        for (double a = 1.0; a >= opt.min_step && extra < 12; a *= 0.5) {
          LoadPath trial = project_initial_load(p, LoadPath(p.grid, ell.values() + a * dir));
          const Matrix step = trial.values() - ell.values();
          if (step.cwiseAbs().maxCoeff() == 0.0) break;
          ReducedEvaluation te;
          try {
            te = reduced_objective_smoothed(p, trial, opt.solver);
          } catch (const SolverError&) {
            continue;
          }
          const double slack = 1e-14 * (1.0 + std::abs(out.eval.value));
          if (!(te.value <= out.eval.value + 1e-4 * (grad.array() * step.array()).sum() + slack)) continue;
          Matrix tg = reduced_gradient(p, trial, te);
          const double tchi = projected_gradient_norm(p, trial, tg);
          if (tchi <= chi) {
            accepted = Candidate{std::move(trial), std::move(te), std::move(tg), tchi};
            break;
          }
          if (!fallback) fallback = Candidate{std::move(trial), std::move(te), std::move(tg), tchi};
          ++extra;
        }
      }
      if (!accepted && quasi) {
        mem_s.clear();
        mem_y.clear();
      } else if (!accepted) {
        break;
      }
    }
    if (!accepted && fallback) {
      accepted = std::move(fallback);
      ++out.nonmonotone_steps;
    }
    if (!accepted) {
      out.stalled = true;
      break;
    }
    const Matrix step = accepted->ell.values() - ell.values();
    Matrix yv = accepted->grad - grad;
    if ((step.array() * yv.array()).sum() > 1e-12 * std::sqrt(h1_inner(sp, p.grid, step, step)) * (yv.norm() + 1e-300)) {
      mem_s.push_back(step);
      mem_y.push_back(std::move(yv));
      if (mem_s.size() > 10) {
        mem_s.erase(mem_s.begin());
        mem_y.erase(mem_y.begin());
      }
    }
    ell = std::move(accepted->ell);
    grad = std::move(accepted->grad);
    chi = accepted->chi;
    out.eval = std::move(accepted->eval);
    history.push_back(chi);
    ++out.iterations;
  }
  out.ell = std::move(ell);
  out.stationarity = chi;
  return out;
}

} // namespace detail

/// Quadratic-penalty treatment of the end-time constraint with smoothing driven down
/// across rounds. The initial load coefficient stays in the stable box throughout.
inline OptimizationResult solve_vocp(const ControlProblem& problem, const LoadPath& ell_init,
                                     const OptimizerOptions& opt = {}) {
  problem.validate();
  detail::check_load(problem, ell_init);
  if (opt.schedule.sigmas.empty() || opt.schedule.max_rounds < 1) throw DomainError("solve_vocp: empty schedule");
  OptimizationResult res;
  res.end_tolerance = problem.end_tolerance();
  LoadPath ell = project_initial_load(problem, ell_init);
  double rho = problem.penalty_weight;
  const DissipationParams exact{problem.params.eps, problem.params.delta, 0.0};
  for (int r = 0; r < opt.schedule.max_rounds; ++r) {
    const std::size_t si = std::min<std::size_t>(static_cast<std::size_t>(r), opt.schedule.sigmas.size() - 1);
    ControlProblem pr = problem.with_params({problem.params.eps, problem.params.delta, opt.schedule.sigmas[si]});
    pr.penalty_weight = rho;
    res.round_starts.push_back(res.gradient_norm_history.size());
    detail::InnerOutcome inner = detail::descend(pr, ell, opt, res.gradient_norm_history);
    ell = std::move(inner.ell);
    const StatePath z = solve_ris(problem.model, ell, problem.z0, exact, opt.solver).path;
    const Feasibility fe = feasibility_residuals(problem, ell, z);
    PenaltyRound pround;
    pround.penalty_weight = rho;
    pround.sigma = pr.params.sigma;
    pround.iterations = inner.iterations;
    pround.smoothed_value = inner.eval.value;
    pround.penalty_term = inner.eval.penalty;
    pround.J = objective(problem, z, ell);
    pround.end_dist = fe.end_dist;
    pround.stationarity = inner.stationarity;
    pround.stalled = inner.stalled;
    pround.nonmonotone_steps = inner.nonmonotone_steps;
    res.nonmonotone_steps += inner.nonmonotone_steps;
    res.rounds.push_back(pround);
    res.iterations += inner.iterations;
    res.ell_star = ell;
    res.z_star = z;
    res.J_star = pround.J;
    res.feasibility = fe;
    res.feasible = fe.end_dist <= res.end_tolerance;
    if (res.feasible && si + 1 == opt.schedule.sigmas.size()) break;
    if (!res.feasible) rho *= opt.schedule.factor;
  }
  return res;
}

struct ContinuationRow {
  double delta = 0.0;
  OptimizationResult result;
  double J = 0.0;
  double end_dist = 0.0;
  double load_step = 0.0;  ///< ||l*_delta - l*_previous||_{H^1(0,T;V*)}, 0 for the first level
};

/// Warm-started chain over decreasing delta at fixed eps.
inline std::vector<ContinuationRow> continuation_delta(const ControlProblem& problem, const std::vector<double>& deltas,
                                                       const LoadPath& ell_init, const OptimizerOptions& opt = {}) {
  if (deltas.empty()) throw DomainError("continuation_delta: empty delta list");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0)) throw DomainError("continuation_delta: deltas must be positive");
    if (i > 0 && !(deltas[i] < deltas[i - 1])) throw DomainError("continuation_delta: deltas must decrease");
  }
  std::vector<ContinuationRow> rows;
  LoadPath warm = ell_init;
  for (double d : deltas) {
    const ControlProblem pd = problem.with_params({problem.params.eps, d, problem.params.sigma});
    ContinuationRow row;
    row.delta = d;
    row.result = solve_vocp(pd, warm, opt);
    row.J = row.result.J_star;
    row.end_dist = row.result.feasibility.end_dist;
    if (!rows.empty()) {
      row.load_step = path_h1_vstar_norm(problem.model.spaces(), row.result.ell_star - rows.back().result.ell_star);
    }
    warm = row.result.ell_star;
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Checks that ztilde solves the rate-independent inclusion
///   0 in dR(ztilde') + D_z I(l, ztilde)
/// with backward-difference velocities, starts stable, and has t_hat' >= rho.
struct DifferentialCheck {
  double stationarity_residual = 0.0;
  double initial_dist = 0.0;
  double min_t_prime = 1.0;
  bool ok = false;
};

inline DifferentialCheck check_differential_solution(const EnergyModel& model, const StatePath& ztilde,
                                                     const LoadPath& ell, double rho = 0.05, double tol = 1e-8) {
  if (!(ztilde.grid() == ell.grid())) throw DimensionError("check_differential_solution: grids differ");
  const DiscreteSpaces& sp = model.spaces();
  const TimeGrid& g = ell.grid();
  DifferentialCheck c;
  c.initial_dist = dist_vstar(sp, -model.grad_I(ell.at(0), ztilde.at(0)));
  double scale = 1.0;
  for (Eigen::Index k = 1; k < g.nodes(); ++k) {
    const Vector v = (ztilde.at(k) - ztilde.at(k - 1)) / g.tau();
    const Vector xi = -model.grad_I(ell.at(k), ztilde.at(k));
    scale = std::max(scale, sp.dual_norm_vstar(xi));
    c.stationarity_residual = std::max(c.stationarity_residual, dist_subdifferential(sp, v, xi));
    // differential solutions carry no viscous contact term, so t_hat' = 1 / (1 + R(z'))
    c.min_t_prime = std::min(c.min_t_prime, 1.0 / (1.0 + R(sp, v)));
  }
  c.ok = c.stationarity_residual <= tol * scale && c.initial_dist <= tol * scale && c.min_t_prime >= rho;
  return c;
}

struct RecoveryOptions {
  double delta = 0.0;
  double rho = 0.05;
  double radius_factor = 2.0;  ///< r = radius_factor * sup ||ztilde||_Z in the convexity threshold
  double residual_tol = 1e-8;
  SolverOptions solver{};
  unsigned workers = 1;
};

struct RecoveryRecord {
  double eps = 0.0;
  StatePath z = StatePath::constant(TimeGrid(1.0, 1), Vector());
  LoadPath ell_eps = LoadPath::zero(TimeGrid(1.0, 1), 0);
  double state_gap = 0.0;      ///< ||z_eps - ztilde||_{H^1(0,T;Z)}
  double load_gap = 0.0;       ///< ||l_eps - l||_{H^1(0,T;V*)}
  double initial_load_gap = 0.0;  ///< max |l_eps(0) - l(0)|
  double end_dist = 0.0;       ///< dist_V*(-D_z I(l_eps(T), z_eps(T)), dR(0))
  double end_dist_zstar = 0.0;
  double identity_residual = 0.0;  ///< max |D_z J_eta(l, z_eps) - D_z I(l_eps, z_eps)|
};

struct RecoveryStudy {
  double eta_bar = 0.0;
  double radius = 0.0;
  DifferentialCheck check;
  std::vector<RecoveryRecord> records;
  double end_order = std::numeric_limits<double>::quiet_NaN();
  bool load_gap_decreasing = false;
  bool state_gap_decreasing = false;
};

/// Reverse approximation: z_eps solves the viscous system with energy I + eta_bar/2 ||z - ztilde||_V^2,
/// and l_eps = l - eta_bar M (z_eps - ztilde) turns it into a viscous solution of the original energy.
inline RecoveryStudy recovery_sequence(const EnergyModel& model, const StatePath& ztilde, const LoadPath& ell,
                                       const std::vector<double>& eps_list, const RecoveryOptions& opt = {}) {
  if (eps_list.empty()) throw DomainError("recovery_sequence: empty eps list");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw DomainError("recovery_sequence: eps values must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw DomainError("recovery_sequence: eps values must decrease");
  }
  RecoveryStudy st;
  st.check = check_differential_solution(model, ztilde, ell, opt.rho, opt.residual_tol);
  if (!st.check.ok) {
    throw DomainError("recovery_sequence: ztilde is not a differential solution (residual " +
                      std::to_string(st.check.stationarity_residual) + ", initial " +
                      std::to_string(st.check.initial_dist) + ", min t' " + std::to_string(st.check.min_t_prime) + ")");
  }
  const DiscreteSpaces& sp = model.spaces();
  const TimeGrid& g = ell.grid();
  double sup = 0.0;
  for (Eigen::Index k = 0; k < g.nodes(); ++k) sup = std::max(sup, sp.norm_z(ztilde.at(k)));
  st.radius = opt.radius_factor * std::max(sup, 1.0);
  st.eta_bar = convexity_threshold(model, st.radius);
  const EnergyModel penalized = model.with_shift(model.shift() + st.eta_bar);
  Matrix shifted = ell.values();
  for (Eigen::Index k = 0; k < g.nodes(); ++k) shifted.col(k) += st.eta_bar * sp.to_dual(ztilde.at(k));
  const LoadPath ell_pen(g, std::move(shifted));

  st.records.resize(eps_list.size());
  parallel_for(eps_list.size(), opt.workers, [&](std::size_t i) {
    RecoveryRecord& rec = st.records[i];
    rec.eps = eps_list[i];
    rec.z = solve_ris(penalized, ell_pen, ztilde.at(0), {eps_list[i], opt.delta, 0.0}, opt.solver).path;
    Matrix le = ell.values();
    for (Eigen::Index k = 0; k < g.nodes(); ++k) le.col(k) -= st.eta_bar * sp.to_dual(rec.z.at(k) - ztilde.at(k));
    rec.ell_eps = LoadPath(g, std::move(le));
    Matrix dz = rec.z.values() - ztilde.values();
    rec.state_gap = path_h1_z_norm(sp, StatePath::from_values(g, std::move(dz)));
    rec.load_gap = path_h1_vstar_norm(sp, rec.ell_eps - ell);
    rec.initial_load_gap = (rec.ell_eps.at(0) - ell.at(0)).cwiseAbs().maxCoeff();
    const Eigen::Index K = g.steps();
    const Vector xi = -model.grad_I(rec.ell_eps.at(K), rec.z.at(K));
    rec.end_dist = dist_vstar(sp, xi);
    rec.end_dist_zstar = dist_zstar(sp, xi);
    for (Eigen::Index k = 0; k < g.nodes(); ++k) {
      const Vector a = grad_penalized(model, st.eta_bar, ztilde.at(k), ell.at(k), rec.z.at(k));
      const Vector b = model.grad_I(rec.ell_eps.at(k), rec.z.at(k));
      rec.identity_residual = std::max(rec.identity_residual, (a - b).cwiseAbs().maxCoeff() / (1.0 + a.cwiseAbs().maxCoeff()));
    }
  });

  std::vector<double> xs, ys;
  st.load_gap_decreasing = st.state_gap_decreasing = true;
  for (std::size_t i = 0; i < st.records.size(); ++i) {
    xs.push_back(st.records[i].eps);
    ys.push_back(st.records[i].end_dist);
    if (i > 0) {
      st.load_gap_decreasing = st.load_gap_decreasing && st.records[i].load_gap < st.records[i - 1].load_gap;
      st.state_gap_decreasing = st.state_gap_decreasing && st.records[i].state_gap < st.records[i - 1].state_gap;
    }
  }
  if (xs.size() >= 2 && std::all_of(ys.begin(), ys.end(), [](double y) { return y > 0.0; })) st.end_order = fit_order(xs, ys);
  return st;
}

} // namespace risv

#endif // RISV_CONTROL_HPP
