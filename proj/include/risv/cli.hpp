#ifndef RISV_CLI_HPP
#define RISV_CLI_HPP

#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "config.hpp"
#include "io.hpp"

namespace risv {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_solver = 3, exit_infeasible = 4 };

struct RunContext {
  std::filesystem::path out_dir = "out";
  unsigned workers = 1;
  std::string hash;
  std::ostream* log = &std::cout;
};

namespace detail {

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// NaN and infinities become null so the report stays valid JSON.
inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const SolveReport& r) {
  return {{"energy_residual", r.energy_residual},
          {"rate_identity_residual", r.rate_identity_residual},
          {"sup_z_norm", r.sup_z_norm},
          {"h1v_seminorm", r.h1v_seminorm},
          {"h1z_seminorm", r.h1z_seminorm},
          {"var_z", r.var_z},
          {"velocity1_norm", r.velocity0_norm},
          {"load_h1_norm", r.load_h1_norm},
          {"dual_surrogate", r.dual_surrogate},
          {"stationarity_residual", r.stationarity_residual},
          {"apriori_bound", r.apriori_bound},
          {"max_inner_iterations", r.max_inner_iterations}};
}

inline json to_json(const DissipationParams& p) { return {{"eps", p.eps}, {"delta", p.delta}, {"sigma", p.sigma}}; }

inline SolveReport solve_report(const EnergyModel& model, const SolveResult& res, const LoadPath& ell,
                                const DissipationParams& p) {
  SolveReport r = apriori_audit(model, res.path, ell, p);
  r.stationarity_residual = res.report.stationarity_residual;
  r.max_inner_iterations = res.report.max_inner_iterations;
  return r;
}

inline double local_order(double x0, double y0, double x1, double y1) {
  if (!(x0 > 0 && y0 > 0 && x1 > 0 && y1 > 0)) return std::numeric_limits<double>::quiet_NaN();
  return std::log(y1 / y0) / std::log(x1 / x0);
}

inline double fit_or_nan(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  }
  return fit_order(x, y);
}

inline json base_report(const ExperimentConfig& c, const char* command) {
  return {{"command", command}, {"seed", c.seed}, {"dissipation", to_json(c.dissipation)},
          {"n", c.spaces.n}, {"T", c.horizon}, {"K", c.steps}, {"nonlinearity", c.nonlinearity.kind}};
}

inline StatePath recovery_candidate(const ExperimentConfig& c) {
  const TimeGrid g = c.grid();
  if (c.recovery.ztilde == "csv") {
    return StatePath::from_values(g, read_trajectory_csv(c.recovery.file, g, c.spaces.n, "recovery.ztilde.path"));
  }
  Matrix vals(c.spaces.n, g.nodes());
  for (Eigen::Index k = 0; k < g.nodes(); ++k) vals.col(k) = c.recovery.z0 + c.recovery.accel * g.t(k) * g.t(k);
  return StatePath::from_values(g, std::move(vals));
}

/// A ztilde + DF(ztilde) + omega sign(ztilde'): the load that makes ztilde slip wherever it moves.
inline LoadPath slip_load(const EnergyModel& model, const StatePath& z) {
  const DiscreteSpaces& sp = model.spaces();
  Matrix vals(z.n(), z.grid().nodes());
  for (Eigen::Index k = 0; k < z.grid().nodes(); ++k) {
    const Vector v = z.velocity(k);
    const Vector sgn = v.unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    vals.col(k) = sp.apply_stiffness(z.at(k)) + model.DF(z.at(k)) + sp.weights().cwiseProduct(sgn);
  }
  return LoadPath(z.grid(), std::move(vals));
}

inline ControlProblem control_problem(const ExperimentConfig& c) {
  ControlProblem p{c.model(), c.z0(), c.grid(), c.dissipation, c.control.beta, std::nullopt, c.control.penalty_weight};
  if (c.control.target == "values") {
    p.z_des = c.control.z_des;
  } else if (c.control.target == "uncontrolled") {
    const StatePath z = solve_ris(p.model, c.load_path(), p.z0, {c.dissipation.eps, c.dissipation.delta, 0.0}, c.solver).path;
    p.z_des = z.at(c.steps);
  }
  return p;
}

inline OptimizerOptions optimizer_options(const ExperimentConfig& c) {
  OptimizerOptions opt;
  opt.max_iterations = c.control.max_iterations;
  opt.gradient_tol = c.control.gradient_tol;
  opt.schedule = c.control.schedule;
  opt.solver = c.solver;
  return opt;
}

inline json to_json(const OptimizationResult& r) {
  json rounds = json::array();
  for (const PenaltyRound& q : r.rounds) {
    rounds.push_back({{"penalty_weight", q.penalty_weight},
                      {"sigma", q.sigma},
                      {"iterations", q.iterations},
                      {"smoothed_value", q.smoothed_value},
                      {"penalty_term", q.penalty_term},
                      {"J", q.J},
                      {"end_dist", q.end_dist},
                      {"stationarity", q.stationarity},
                      {"nonmonotone_steps", q.nonmonotone_steps},
                      {"stalled", q.stalled}});
  }
  return {{"J_star", r.J_star},
          {"init_dist", r.feasibility.init_dist},
          {"end_dist", r.feasibility.end_dist},
          {"end_tolerance", r.end_tolerance},
          {"feasible", r.feasible},
          {"iterations", r.iterations},
          {"nonmonotone_steps", r.nonmonotone_steps},
          {"gradient_norm_history", r.gradient_norm_history},
          {"round_starts", r.round_starts},
          {"rounds", rounds}};
}

} // namespace detail

/// Viscous solve: solve_trajectory.csv (t, z, v, l) and solve_report.json.
inline int cmd_solve(const ExperimentConfig& c, const RunContext& ctx) {
  const EnergyModel model = c.model();
  const LoadPath ell = c.load_path();
  const Vector z0 = c.z0();
  const SolveResult res = solve_ris(model, ell, z0, c.dissipation, c.solver);
  const SolveReport rep = detail::solve_report(model, res, ell, c.dissipation);
  write_state_csv(ctx.out_dir / "solve_trajectory.csv", ctx.hash, res.path, ell);
  json j = detail::base_report(c, "solve");
  j["report"] = detail::to_json(rep);
  j["initial_dist_vstar"] = dist_vstar(model.spaces(), -model.grad_I(ell.at(0), z0));
  j["z_final"] = detail::to_json(res.path.at(c.steps));
  write_json(ctx.out_dir / "solve_report.json", ctx.hash, j);
  *ctx.log << "solve: z(T) = " << j["z_final"].dump() << ", energy residual " << rep.energy_residual << '\n';
  return exit_ok;
}

/// Arclength reparametrization: parametrized.csv (t_hat, s, dist, in_G, z_hat),
/// physical.csv (t, z) and parametrize_report.json with the three residuals and the jumps.
inline int cmd_parametrize(const ExperimentConfig& c, const RunContext& ctx) {
  const EnergyModel model = c.model();
  const LoadPath ell = c.load_path();
  const SolveResult res = solve_ris(model, ell, c.z0(), c.dissipation, c.solver);
  const ParametrizedSolution ps = reparametrize(model, res.path, ell, c.m_out(), c.parametrization.g_threshold);
  const BvResiduals r = bv_residuals(model, ps);
  const PhysicalSolution ph = physical_time_solution(ps, c.parametrization.jump_threshold, c.parametrization.min_cells);
  const Eigen::Index n = ps.z_hat.rows();

  std::vector<std::string> header{"t_hat", "s", "dist", "in_G"};
  for (const auto& name : detail::column_names("z", n)) header.push_back(name);
  std::vector<std::vector<double>> rows;
  for (Eigen::Index j = 0; j < ps.size(); ++j) {
    const auto u = static_cast<std::size_t>(j);
    std::vector<double> row{ps.t_hat[u], ps.s[u], ps.dist[u], ps.in_G[u] ? 1.0 : 0.0};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(ps.z_hat(i, j));
    rows.push_back(std::move(row));
  }
  write_csv(ctx.out_dir / "parametrized.csv", ctx.hash, header, rows);
  write_state_csv(ctx.out_dir / "physical.csv", ctx.hash, ph.path, ell);

  json jumps = json::array();
  for (const JumpRecord& jr : ph.jumps) {
    jumps.push_back({{"t", jr.t},
                     {"t_begin", jr.t_begin},
                     {"t_end", jr.t_end},
                     {"s_begin", jr.s_begin},
                     {"s_end", jr.s_end},
                     {"z_before", detail::to_json(jr.z_before)},
                     {"z_after", detail::to_json(jr.z_after)},
                     {"state_gap", model.spaces().norm_v(jr.z_after - jr.z_before)}});
  }
  json j = detail::base_report(c, "parametrize");
  j["S"] = ps.S;
  j["m_out"] = ps.size();
  j["residuals"] = {{"complementarity", r.complementarity},
                    {"normalization", r.normalization},
                    {"energy_identity", r.energy_identity}};
  j["min_t_prime"] = r.min_t_prime;
  j["max_t_prime"] = r.max_t_prime;
  j["jumps"] = jumps;
  write_json(ctx.out_dir / "parametrize_report.json", ctx.hash, j);
  *ctx.log << "parametrize: S = " << ps.S << ", jumps " << ph.jumps.size() << ", residuals " << j["residuals"].dump() << '\n';
  return exit_ok;
}

/// Rate tables: delta_sweep.csv, variation_sweep.csv or tau_sweep.csv, plus sweep_report.json.
inline int cmd_sweep(const ExperimentConfig& c, const RunContext& ctx) {
  const EnergyModel model = c.model();
  const Vector z0 = c.z0();
  json j = detail::base_report(c, "sweep");
  j["sweep"] = c.studies.sweep;

  if (c.studies.sweep == "delta") {
    if (c.studies.delta_list.empty()) throw ConfigError("studies.delta_list", "must not be empty for a delta sweep");
    const DeltaStudy st = delta_convergence_study(model, c.load_path(), z0, c.dissipation.eps, c.studies.delta_list,
                                                  c.solver, ctx.workers);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i + 1 < st.rows.size(); ++i) {
      const double lo = i == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : detail::local_order(st.rows[i - 1].delta, st.rows[i - 1].sup_error, st.rows[i].delta,
                                                     st.rows[i].sup_error);
      rows.push_back({st.rows[i].delta, st.rows[i].sup_error, lo});
    }
    write_csv(ctx.out_dir / "delta_sweep.csv", ctx.hash, {"delta", "sup_error", "order"}, rows);
    j["eps"] = st.eps;
    j["reference_delta"] = st.reference_delta;
    j["order"] = st.order;
    j["monotone"] = st.monotone;
    *ctx.log << "sweep delta: order " << st.order << (st.monotone ? ", monotone" : ", not monotone") << '\n';
  } else if (c.studies.sweep == "variation") {
    if (c.studies.eps_list.empty()) throw ConfigError("studies.eps_list", "must not be empty for a variation sweep");
    if (c.studies.delta_list.empty()) throw ConfigError("studies.delta_list", "must not be empty for a variation sweep");
    const LoadPath ell = c.load_path();
    struct Cell {
      double eps, delta;
      SolveReport rep;
    };
    std::vector<Cell> cells;
    for (double e : c.studies.eps_list)
      for (double d : c.studies.delta_list) cells.push_back({e, d, {}});
    parallel_for(cells.size(), ctx.workers, [&](std::size_t i) {
      const DissipationParams p{cells[i].eps, cells[i].delta, 0.0};
      const SolveResult res = solve_ris(model, ell, z0, p, c.solver);
      cells[i].rep = detail::solve_report(model, res, ell, p);
    });
    std::vector<std::vector<double>> rows;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const Cell& cell : cells) {
      rows.push_back({cell.eps, cell.delta, cell.rep.var_z, cell.rep.sup_z_norm, cell.rep.h1v_seminorm,
                      cell.rep.h1z_seminorm, cell.rep.energy_residual});
      lo = std::min(lo, cell.rep.var_z);
      hi = std::max(hi, cell.rep.var_z);
    }
    write_csv(ctx.out_dir / "variation_sweep.csv", ctx.hash,
              {"eps", "delta", "var_z", "sup_z_norm", "h1v_seminorm", "h1z_seminorm", "energy_residual"}, rows);
    j["var_z_min"] = lo;
    j["var_z_max"] = hi;
    j["band_ratio"] = detail::number_or_null(hi / lo);
    j["within_factor_two"] = hi <= 2.0 * lo;
    *ctx.log << "sweep variation: Var_Z in [" << lo << ", " << hi << "]\n";
  } else {
    if (c.studies.steps_list.empty()) throw ConfigError("studies.K_list", "must not be empty for a tau sweep");
    const auto m = c.studies.steps_list.size();
    std::vector<double> taus(m), bal(m), rate(m);
    parallel_for(m, ctx.workers, [&](std::size_t i) {
      ExperimentConfig ci = c;
      ci.steps = c.studies.steps_list[i];
      const LoadPath ell = ci.load_path();
      const SolveResult res = solve_ris(model, ell, z0, c.dissipation, c.solver);
      taus[i] = ell.grid().tau();
      bal[i] = energy_balance_residual(model, res.path, ell, c.dissipation);
      rate[i] = rate_energy_residual(model, res.path, ell, c.dissipation);
    });
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < m; ++i) {
      rows.push_back({taus[i], static_cast<double>(c.studies.steps_list[i]), bal[i], rate[i]});
    }
    write_csv(ctx.out_dir / "tau_sweep.csv", ctx.hash, {"tau", "K", "energy_residual", "rate_residual"}, rows);
    j["energy_order"] = detail::number_or_null(detail::fit_or_nan(taus, bal));
    j["rate_order"] = detail::number_or_null(detail::fit_or_nan(taus, rate));
    *ctx.log << "sweep tau: orders " << j["energy_order"].dump() << ", " << j["rate_order"].dump() << '\n';
  }
  write_json(ctx.out_dir / "sweep_report.json", ctx.hash, j);
  return exit_ok;
}

/// Optimal load: optimize_solution.csv (t, z*, v*, l*) and optimize_report.json. With a
/// non-empty studies.delta_list the problem is solved along that delta continuation and
/// continuation.csv is written. Exit 4 when the final result violates the constraints.
inline int cmd_optimize(const ExperimentConfig& c, const RunContext& ctx) {
  const ControlProblem p = detail::control_problem(c);
  const LoadPath init = c.load_path();
  const OptimizerOptions opt = detail::optimizer_options(c);

  json j = detail::base_report(c, "optimize");
  j["beta"] = p.beta;
  j["z_des"] = p.z_des ? detail::to_json(*p.z_des) : json(nullptr);
  {
    ControlProblem q = p;
    q.params.sigma = c.control.schedule.sigmas.front();
    const double dq = c.studies.delta_list.empty() ? q.params.delta : c.studies.delta_list.front();
    q.params.delta = dq;
    const GradientCheck gc = gradient_check(q, project_initial_load(q, init), c.control.gradient_checks, c.seed, 1e-6, c.solver);
    j["gradient_check"] = {{"directions", c.control.gradient_checks},
                           {"sigma", q.params.sigma},
                           {"relative_errors", gc.relative_errors},
                           {"max_relative_error", gc.max_relative_error}};
  }
  const StatePath z_init = solve_ris(p.model, init, p.z0, {p.params.eps, p.params.delta, 0.0}, c.solver).path;
  j["J_initial"] = objective(p, z_init, init);

  OptimizationResult final_result;
  if (!c.studies.delta_list.empty()) {
    const auto rows = continuation_delta(p, c.studies.delta_list, init, opt);
    std::vector<std::vector<double>> table;
    json levels = json::array();
    for (const ContinuationRow& r : rows) {
      table.push_back({r.delta, r.J, r.end_dist, r.load_step, r.result.feasible ? 1.0 : 0.0});
      levels.push_back({{"delta", r.delta}, {"result", detail::to_json(r.result)}, {"load_step", r.load_step}});
    }
    write_csv(ctx.out_dir / "continuation.csv", ctx.hash, {"delta", "J", "end_dist", "load_step", "feasible"}, table);
    const std::size_t m = rows.size();
    j["continuation"] = levels;
    if (m >= 2) j["last_relative_change"] = std::abs(rows[m - 1].J - rows[m - 2].J) / std::abs(rows[m - 2].J);
    bool dec = true;
    for (std::size_t i = 2; i < m; ++i) dec = dec && rows[i].load_step < rows[i - 1].load_step;
    j["load_step_decreasing"] = dec;
    final_result = rows.back().result;
  } else {
    final_result = solve_vocp(p, init, opt);
  }
  j["result"] = detail::to_json(final_result);
  write_state_csv(ctx.out_dir / "optimize_solution.csv", ctx.hash, final_result.z_star, final_result.ell_star);
  write_json(ctx.out_dir / "optimize_report.json", ctx.hash, j);
  *ctx.log << "optimize: J* = " << final_result.J_star << ", end_dist " << final_result.feasibility.end_dist << " (tol "
           << final_result.end_tolerance << ")" << (final_result.feasible ? "" : ", INFEASIBLE") << '\n';
  return final_result.feasible ? exit_ok : exit_infeasible;
}

/// Reverse approximation of a differential solution: recovery.csv (one row per eps),
/// recovery_eps<i>.csv trajectories and recovery_report.json. Exit 4 when the candidate
/// fails validation.
inline int cmd_recover(const ExperimentConfig& c, const RunContext& ctx) {
  if (c.studies.eps_list.empty()) throw ConfigError("studies.eps_list", "must not be empty for recovery");
  const EnergyModel model = c.model();
  const StatePath zt = detail::recovery_candidate(c);
  const LoadPath ell = c.recovery.load == "slip" ? detail::slip_load(model, zt) : c.load_path();
  const DifferentialCheck chk = check_differential_solution(model, zt, ell, c.recovery.rho);
  json j = detail::base_report(c, "recover");
  j["check"] = {{"stationarity_residual", chk.stationarity_residual},
                {"initial_dist", chk.initial_dist},
                {"min_t_prime", chk.min_t_prime},
                {"ok", chk.ok}};
  if (!chk.ok) {
    write_json(ctx.out_dir / "recovery_report.json", ctx.hash, j);
    *ctx.log << "recover: candidate rejected " << j["check"].dump() << '\n';
    return exit_infeasible;
  }
  RecoveryOptions opt;
  opt.delta = c.recovery.delta;
  opt.rho = c.recovery.rho;
  opt.radius_factor = c.recovery.radius_factor;
  opt.solver = c.solver;
  opt.workers = ctx.workers;
  const RecoveryStudy st = recovery_sequence(model, zt, ell, c.studies.eps_list, opt);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < st.records.size(); ++i) {
    const RecoveryRecord& r = st.records[i];
    rows.push_back({r.eps, r.state_gap, r.load_gap, r.initial_load_gap, r.end_dist, r.end_dist_zstar, r.identity_residual});
    write_state_csv(ctx.out_dir / ("recovery_eps" + std::to_string(i) + ".csv"), ctx.hash, r.z, r.ell_eps);
  }
  write_csv(ctx.out_dir / "recovery.csv", ctx.hash,
            {"eps", "state_gap", "load_gap", "initial_load_gap", "end_dist", "end_dist_zstar", "identity_residual"}, rows);
  j["eta_bar"] = st.eta_bar;
  j["radius"] = st.radius;
  j["end_order"] = detail::number_or_null(st.end_order);
  j["load_gap_decreasing"] = st.load_gap_decreasing;
  j["state_gap_decreasing"] = st.state_gap_decreasing;
  write_json(ctx.out_dir / "recovery_report.json", ctx.hash, j);
  *ctx.log << "recover: eta_bar " << st.eta_bar << ", end order " << j["end_order"].dump() << '\n';
  return exit_ok;
}

/// Runs `fn` and maps library exceptions to exit codes, reporting on `err`.
template <typename Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const DomainError& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_config;
  } catch (const DimensionError& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    err << "solver failure: " << e.what() << '\n';
    return exit_solver;
  }
}

/// Loads the preset/config pair, applies overrides and dispatches to the named command.
struct Invocation {
  std::string command;
  std::string config_path;
  std::string preset;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;  ///< 0: one per hardware thread
};

inline int run(const Invocation& inv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  return guarded(
      [&]() -> int {
        if (inv.config_path.empty() && inv.preset.empty()) throw ConfigError("--config", "need --config or --preset");
        auto [tree, base] = load_config_tree(inv.config_path, inv.preset);
        if (inv.seed) tree["seed"] = *inv.seed;
        if (!inv.out_dir.empty()) tree["output_dir"] = inv.out_dir;
        const ExperimentConfig c = parse_config(tree, base);
        RunContext ctx;
        ctx.out_dir = c.output_dir;
        ctx.workers = inv.workers > 0 ? inv.workers : default_workers();
        ctx.hash = config_hash(tree);
        ctx.log = &log;
        std::filesystem::create_directories(ctx.out_dir);
        {
          json resolved = tree;
          resolved["config_hash"] = ctx.hash;
          std::ofstream(ctx.out_dir / "config.json") << resolved.dump(2) << '\n';
        }
        if (inv.command == "solve") return cmd_solve(c, ctx);
        if (inv.command == "parametrize") return cmd_parametrize(c, ctx);
        if (inv.command == "sweep") return cmd_sweep(c, ctx);
        if (inv.command == "optimize") return cmd_optimize(c, ctx);
        if (inv.command == "recover") return cmd_recover(c, ctx);
        throw ConfigError("command", "unknown command '" + inv.command + "'");
      },
      err);
}

} // namespace risv

#endif // RISV_CLI_HPP
