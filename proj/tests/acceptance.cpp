// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers to run a subset.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "risv/cli.hpp"

using namespace risv;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [x]");
  }
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

ExperimentConfig preset(const std::string& name) {
  const auto [tree, base] = load_config_tree("", name);
  return parse_config(tree, base);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void scalar_play(Verdict& v) {
  const ExperimentConfig c = preset("play");
  const auto t0 = std::chrono::steady_clock::now();
  const SolveResult r = solve_ris(c.model(), c.load_path(), c.z0(), c.dissipation, c.solver);
  const double secs = seconds_since(t0);
  const double z1 = r.path.at(c.steps)(0);
  v.check(std::abs(z1 - 1.0) <= 0.05, "z(1) = " + fmt(z1));
  v.check(secs < 1.0, "runtime " + fmt(secs) + " s");
}

void delta_rate(Verdict& v) {
  const ExperimentConfig c = preset("delta_study");
  const auto t0 = std::chrono::steady_clock::now();
  const DeltaStudy st = delta_convergence_study(c.model(), c.load_path(), c.z0(), c.dissipation.eps,
                                                c.studies.delta_list, c.solver, default_workers());
  const double secs = seconds_since(t0);
  std::string errs;
  for (std::size_t i = 0; i + 1 < st.rows.size(); ++i) errs += (i ? "," : "") + fmt(st.rows[i].sup_error);
  v.check(st.order >= 0.45, "order " + fmt(st.order));
  v.check(st.monotone, "errors " + errs);
  v.check(c.spaces.n == 8 && c.steps == 2000, "n = 8, K = 2000");
  v.check(secs < 30.0, "runtime " + fmt(secs) + " s");
}

void initial_velocity(Verdict& v) {
  int checked = 0;
  double worst = 0.0;
  for (const std::string& name : list_presets()) {
    const ExperimentConfig c = preset(name);
    const EnergyModel m = c.model();
    const LoadPath ell = c.load_path();
    const Vector z0 = c.z0();
    if (!stable_set_check(m.spaces(), -m.grad_I(ell.at(0), z0))) continue;
    const SolveResult r = solve_ris(m, ell, z0, c.dissipation, c.solver);
    const double ratio = m.spaces().norm_v(r.path.velocity(1)) / ell.grid().tau();
    worst = std::max(worst, ratio);
    ++checked;
    if (ratio > 10.0) v.check(false, name + ": ||v_1||/tau = " + fmt(ratio));
  }
  v.check(checked > 0, std::to_string(checked) + " presets with stable start");
  v.check(worst <= 10.0, "max ||v_1||_V / tau = " + fmt(worst));
}

void energy_identities(Verdict& v) {
  ExperimentConfig c = preset("play");
  const EnergyModel m = c.model();
  std::vector<double> taus, bal, rate;
  for (Eigen::Index k : {1000, 2000, 4000}) {
    c.steps = k;
    const LoadPath ell = c.load_path();
    const SolveResult r = solve_ris(m, ell, c.z0(), c.dissipation, c.solver);
    taus.push_back(ell.grid().tau());
    bal.push_back(energy_balance_residual(m, r.path, ell, c.dissipation));
    rate.push_back(rate_energy_residual(m, r.path, ell, c.dissipation));
  }
  v.check(bal[0] <= 0.05, "energy residual " + fmt(bal[0]));
  v.check(rate[0] <= 0.05, "rate residual " + fmt(rate[0]));
  const double ob = fit_order(taus, bal), orr = fit_order(taus, rate);
  v.check(ob >= 0.9, "energy order " + fmt(ob));
  v.check(orr >= 0.9, "rate order " + fmt(orr));
}

void parametrized_residuals(Verdict& v) {
  for (const char* name : {"play", "stick"}) {
    const ExperimentConfig c = preset(name);
    const EnergyModel m = c.model();
    const LoadPath ell = c.load_path();
    const SolveResult r = solve_ris(m, ell, c.z0(), c.dissipation, c.solver);
    const BvResiduals b = bv_residuals(m, reparametrize(m, r.path, ell, c.m_out(), c.parametrization.g_threshold));
    const double tol = std::string(name) == "play" ? 0.1 : 1e-10;
    const double worst = std::max({b.complementarity, b.normalization, b.energy_identity});
    v.check(worst <= tol, std::string(name) + " (m_out " + std::to_string(c.m_out()) + "): " + fmt(b.complementarity) +
                              ", " + fmt(b.normalization) + ", " + fmt(b.energy_identity));
  }
}

void jump_detection(Verdict& v) {
  const ExperimentConfig c = preset("doublewell");
  const EnergyModel m = c.model();
  const LoadPath ell = c.load_path();
  const SolveResult r = solve_ris(m, ell, c.z0(), c.dissipation, c.solver);
  const ParametrizedSolution ps = reparametrize(m, r.path, ell, c.m_out(), c.parametrization.g_threshold);
  const PhysicalSolution ph = physical_time_solution(ps, c.parametrization.jump_threshold, c.parametrization.min_cells);
  v.check(ph.jumps.size() == 1, std::to_string(ph.jumps.size()) + " jump(s)");
  if (!ph.jumps.empty()) {
    const double gap = m.spaces().norm_v(ph.jumps.front().z_after - ph.jumps.front().z_before);
    v.check(gap > 0.0, "state gap " + fmt(gap) + " at t = " + fmt(ph.jumps.front().t));
  }
  const double ei = bv_residuals(m, ps).energy_identity;
  v.check(ei <= 0.2, "energy identity " + fmt(ei));
}

void variation_band(Verdict& v) {
  const ExperimentConfig c = preset("w11_sweep");
  const EnergyModel m = c.model();
  const LoadPath ell = c.load_path();
  std::vector<double> vars;
  for (double e : c.studies.eps_list)
    for (double d : c.studies.delta_list) vars.push_back(variation_z(m.spaces(), solve_ris(m, ell, c.z0(), {e, d, 0.0}, c.solver).path));
  const double lo = *std::min_element(vars.begin(), vars.end()), hi = *std::max_element(vars.begin(), vars.end());
  v.check(vars.size() == 9, std::to_string(vars.size()) + " (eps, delta) pairs");
  v.check(lo > 0.0 && hi <= 2.0 * lo, "Var_Z in [" + fmt(lo) + ", " + fmt(hi) + "]");
}

void adjoint(Verdict& v) {
  const ExperimentConfig c = preset("adjoint");
  const ControlProblem p = detail::control_problem(c);
  const auto t0 = std::chrono::steady_clock::now();
  const GradientCheck g = gradient_check(p, c.load_path(), 10, c.seed, 1e-6, c.solver);
  const double secs = seconds_since(t0);
  v.check(p.params.sigma == 1e-3 && p.params.delta == 1e-2 && c.spaces.n == 3 && c.steps == 50,
          "n = 3, K = 50, sigma = 1e-3, delta = 1e-2");
  v.check(g.relative_errors.size() == 10 && g.max_relative_error <= 1e-5,
          "max relative error " + fmt(g.max_relative_error) + " over 10 directions");
  v.check(secs < 10.0, "runtime " + fmt(secs) + " s");
}

void continuation(Verdict& v) {
  const ExperimentConfig c = preset("control_convex");
  const ControlProblem p = detail::control_problem(c);
  const auto rows = continuation_delta(p, c.studies.delta_list, c.load_path(), detail::optimizer_options(c));
  const std::size_t m = rows.size();
  if (m < 3) {
    v.check(false, "need at least three delta levels");
    return;
  }
  const double change = std::abs(rows[m - 1].J - rows[m - 2].J) / std::abs(rows[m - 2].J);
  v.check(change <= 0.05, "J change over last two levels " + fmt(100.0 * change) + "%");
  std::string steps;
  bool dec = true;
  for (std::size_t i = 1; i < m; ++i) {
    steps += (i > 1 ? "," : "") + fmt(rows[i].load_step);
    if (i > 1) dec = dec && rows[i].load_step < rows[i - 1].load_step;
  }
  v.check(dec, "load steps " + steps);
  bool feasible = true;
  for (const auto& r : rows) feasible = feasible && r.result.feasible;
  v.check(feasible, "all levels feasible");
}

void recovery(Verdict& v) {
  const ExperimentConfig c = preset("recovery");
  const EnergyModel m = c.model();
  const StatePath zt = detail::recovery_candidate(c);
  const LoadPath ell = detail::slip_load(m, zt);
  RecoveryOptions opt;
  opt.rho = c.recovery.rho;
  opt.radius_factor = c.recovery.radius_factor;
  opt.delta = c.recovery.delta;
  opt.solver = c.solver;
  opt.workers = default_workers();
  const DifferentialCheck chk = check_differential_solution(m, zt, ell, opt.rho);
  v.check(chk.ok, "candidate validated (min t' " + fmt(chk.min_t_prime) + ")");
  if (!chk.ok) return;
  const RecoveryStudy st = recovery_sequence(m, zt, ell, c.studies.eps_list, opt);
  bool exact0 = true;
  for (const auto& r : st.records) exact0 = exact0 && (r.ell_eps.at(0).array() == ell.at(0).array()).all();
  v.check(exact0, "l_eps(0) == l(0)");
  v.check(st.load_gap_decreasing, "load gap decreasing");
  v.check(std::isfinite(st.end_order) && st.end_order >= 0.45, "end-distance order " + fmt(st.end_order));
}

double velocity_objective(const DiscreteSpaces& sp, const Vector& v, const Vector& w, const DissipationParams& p) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) r += sp.weights()(i) * std::abs(v(i));
  const Vector av = sp.apply_stiffness(v);
  return r + 0.5 * p.eps * v.dot(sp.mass().cwiseProduct(v)) + 0.5 * p.delta * v.dot(av) - w.dot(v);
}

// Exhaustive search over a box; in 2D refined once around the best point.
Vector grid_argmin(const DiscreteSpaces& sp, const Vector& w, const DissipationParams& p, double half, double& spacing) {
  const Eigen::Index n = sp.n();
  const int m = n == 1 ? 20000 : 300;
  Vector center = Vector::Zero(n), best = center;
  double width = half;
  for (int level = 0; level < (n == 1 ? 1 : 2); ++level) {
    double best_val = std::numeric_limits<double>::infinity();
    const int jm = n == 1 ? 0 : m;
    for (int i = -m; i <= m; ++i) {
      for (int j = -jm; j <= jm; ++j) {
        Vector v = center;
        v(0) += width * i / m;
        if (n == 2) v(1) += width * j / m;
        const double val = velocity_objective(sp, v, w, p);
        if (val < best_val) {
          best_val = val;
          best = v;
        }
      }
    }
    spacing = width / m;
    center = best;
    width = 4.0 * spacing;
  }
  return best;
}

void kernel_oracles(Verdict& v) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst_v = 0.0;
  for (Eigen::Index n : {1, 2}) {
    const DiscreteSpaces sp = build_spaces(n, 1.0);
    for (const DissipationParams& p : {DissipationParams{0.5, 0.0, 0.0}, DissipationParams{0.1, 0.05, 0.0}}) {
      for (int t = 0; t < 4; ++t) {
        Vector w(n);
        for (Eigen::Index i = 0; i < n; ++i) w(i) = 3.0 * sp.weights()(i) * nd(rng);
        double spacing = 0.0;
        const Vector g = grid_argmin(sp, w, p, 20.0, spacing);
        const Vector s = solve_velocity(sp, w, p);
        worst_v = std::max(worst_v, (s - g).cwiseAbs().maxCoeff() / spacing);
      }
    }
  }
  v.check(worst_v <= 2.0, "solve_velocity vs grid: " + fmt(worst_v) + " grid cells");

  const DiscreteSpaces sp3 = build_spaces(3, 1.0);
  const Vector& w3 = sp3.weights();
  double worst_d = 0.0;
  for (int t = 0; t < 5; ++t) {
    Vector xi(3);
    for (int i = 0; i < 3; ++i) xi(i) = 0.6 * nd(rng);
    double best = std::numeric_limits<double>::infinity();
    const int m = 24;
    for (int i = 0; i <= m; ++i)
      for (int j = 0; j <= m; ++j)
        for (int k = 0; k <= m; ++k) {
          Vector eta(3);
          eta << w3(0) * (2.0 * i / m - 1), w3(1) * (2.0 * j / m - 1), w3(2) * (2.0 * k / m - 1);
          best = std::min(best, sp3.dual_norm_zstar(xi - eta));
        }
    worst_d = std::max(worst_d, std::abs(dist_zstar(sp3, xi) - best));
  }
  v.check(worst_d <= 2e-2, "dist_zstar vs box brute force: " + fmt(worst_d));

  double worst_l = 0.0;
  for (double eps : {1.0, 0.1, 1e-2}) {
    for (double delta : {0.0, 0.05}) {
      const DissipationParams p{eps, delta, 0.0};
      worst_l = std::max(worst_l, lipschitz_audit(build_spaces(5, 1.0), p, 200, 3) * eps);
    }
  }
  v.check(worst_l <= 1.01, "eps * Lipschitz ratio " + fmt(worst_l));
}

} // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria{
      {"scalar play oracle", scalar_play},
      {"delta rate", delta_rate},
      {"initial velocity vanishes", initial_velocity},
      {"energy identities", energy_identities},
      {"parametrized residuals", parametrized_residuals},
      {"nonconvex jump detection", jump_detection},
      {"W11 uniformity", variation_band},
      {"adjoint correctness", adjoint},
      {"delta continuation of control", continuation},
      {"reverse approximation", recovery},
      {"dissipation kernel oracles", kernel_oracles}};

  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion " << argv[i] << '\n';
      return 2;
    }
    selected.push_back(static_cast<std::size_t>(k - 1));
  }
  if (selected.empty()) {
    for (std::size_t i = 0; i < criteria.size(); ++i) selected.push_back(i);
  }

  int failed = 0;
  for (std::size_t i : selected) {
    Verdict v;
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << i + 1 << " (" << criteria[i].first
              << "): " << v.detail.str() << std::endl;
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
