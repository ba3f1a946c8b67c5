#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "risv/state_solver.hpp"

using namespace risv;

namespace {

struct Play {
  DiscreteSpaces sp = DiscreteSpaces::scalar(1.0, 1.0, 1.0);
  EnergyModel model{sp, Nonlinearity::none()};
  DissipationParams params{1e-3, 0.0, 0.0};

  LoadPath load(Eigen::Index steps) const {
    return LoadPath::from_function(TimeGrid(1.0, steps), 1, [](double t) { return Vector::Constant(1, 2.0 * t); });
  }
};

// Scalar play operator with A = M = omega = 1: stick while |2t - z| <= 1, then z = 2t - 1.
double play_exact(double t) { return std::max(0.0, 2.0 * t - 1.0); }

} // namespace

TEST(StateSolver, ZeroDataStaysAtRest) {
  const DiscreteSpaces sp = build_spaces(4, 1.0);
  const EnergyModel m(sp, Nonlinearity::none());
  const LoadPath ell = LoadPath::zero(TimeGrid(1.0, 50), 4);
  const auto res = solve_ris(m, ell, Vector::Zero(4), {0.1, 0.01, 0.0});
  EXPECT_EQ(res.path.values().cwiseAbs().maxCoeff(), 0.0);
  const SolveReport r = apriori_audit(m, res.path, ell, {0.1, 0.01, 0.0});
  EXPECT_EQ(r.energy_residual, 0.0);
  EXPECT_EQ(r.rate_identity_residual, 0.0);
  EXPECT_EQ(r.h1v_seminorm, 0.0);
  EXPECT_EQ(r.h1z_seminorm, 0.0);
  EXPECT_EQ(r.var_z, 0.0);
}

TEST(StateSolver, PlayOracle) {
  const Play play;
  const LoadPath ell = play.load(1000);
  const auto start = std::chrono::steady_clock::now();
  const auto res = solve_ris(play.model, ell, Vector::Zero(1), play.params);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 1.0);
  EXPECT_NEAR(res.path.at(1000)(0), 1.0, 0.05);
  for (Eigen::Index k = 0; k <= 1000; k += 50) EXPECT_NEAR(res.path.at(k)(0), play_exact(k * 1e-3), 0.01);
  EXPECT_NEAR(variation_z(play.sp, res.path), 1.0, 0.05);
  EXPECT_LE(play.sp.norm_v(res.path.velocity(1)), 10.0 * 1e-3);
  EXPECT_LE(res.report.stationarity_residual, 1e-9);
}

TEST(StateSolver, PlayEnergyIdentitiesConverge) {
  const Play play;
  auto study = [&](std::vector<Eigen::Index> steps_list, std::vector<double>& bal, std::vector<double>& rate) {
    std::vector<double> taus;
    for (Eigen::Index steps : steps_list) {
      const LoadPath ell = play.load(steps);
      const auto res = solve_ris(play.model, ell, Vector::Zero(1), play.params);
      taus.push_back(1.0 / static_cast<double>(steps));
      bal.push_back(energy_balance_residual(play.model, res.path, ell, play.params));
      rate.push_back(rate_energy_residual(play.model, res.path, ell, play.params));
    }
    return taus;
  };
  std::vector<double> bal, rate;
  const auto taus = study({1000, 2000, 4000}, bal, rate);
  EXPECT_LE(bal[0], 0.02);
  EXPECT_LE(rate[0], 0.05);
  EXPECT_GE(fit_order(taus, bal), 0.9);
  // The backward-Euler defect is 2 eps tau / (tau + 2 eps): first order once tau << eps.
  for (std::size_t i = 0; i < taus.size(); ++i) {
    EXPECT_NEAR(rate[i], 2.0 * play.params.eps * taus[i] / (taus[i] + 2.0 * play.params.eps), 1e-9);
  }
  std::vector<double> bal_fine, rate_fine;
  const auto fine = study({8000, 16000, 32000}, bal_fine, rate_fine);
  EXPECT_GE(fit_order(fine, rate_fine), 0.9);
}

TEST(StateSolver, StickInvariance) {
  const DiscreteSpaces sp = build_spaces(5, 1.0);
  const EnergyModel m(sp, Nonlinearity::doublewell(2.25));
  Vector z0(5);
  z0 << 0.1, -0.2, 0.3, 0.0, 0.05;
  // load keeps -D_z I inside the stable box at all times
  const Vector base = sp.apply_stiffness(z0) + m.DF(z0);
  const LoadPath ell = LoadPath::from_function(TimeGrid(1.0, 100), 5, [&](double t) -> Vector {
    return base + 0.5 * std::sin(3.0 * t) * sp.weights();
  });
  const auto res = solve_ris(m, ell, z0, {0.05, 0.01, 0.0}, SolverOptions{1e-10, 10000, {}, true, true});
  for (Eigen::Index k = 0; k < ell.grid().nodes(); ++k) EXPECT_EQ((res.path.at(k) - z0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(StateSolver, RejectsUnstableStartInStrictMode) {
  const Play play;
  const LoadPath ell = LoadPath::from_function(TimeGrid(1.0, 10), 1, [](double) { return Vector::Constant(1, 3.0); });
  SolverOptions opt;
  opt.strict_stability = true;
  EXPECT_THROW(solve_ris(play.model, ell, Vector::Zero(1), play.params, opt), DomainError);
  EXPECT_THROW(solve_ris(play.model, ell, Vector::Zero(1), {0.0, 0.0, 0.0}), DomainError);
}

TEST(StateSolver, FrozenLoadDecreasesEnergy) {
  const DiscreteSpaces sp = build_spaces(6, 4.0);
  const EnergyModel m(sp, Nonlinearity::doublewell(2.25));
  const Vector l = 2.0 * sp.mass();
  const LoadPath ell = LoadPath::from_function(TimeGrid(1.0, 200), 6, [&](double) { return l; });
  const auto res = solve_ris(m, ell, Vector::Zero(6), {0.05, 0.001, 0.0});
  for (Eigen::Index k = 1; k < ell.grid().nodes(); ++k) {
    EXPECT_LE(m.energy_I(l, res.path.at(k)), m.energy_I(l, res.path.at(k - 1)) + 1e-12);
  }
}

TEST(StateSolver, DiscreteStationarityHolds) {
  const DiscreteSpaces sp = build_spaces(6, 4.0);
  const EnergyModel m(sp, Nonlinearity::doublewell(2.25));
  const DissipationParams p{0.05, 0.01, 0.0};
  const LoadPath ell = LoadPath::ramp(sp, TimeGrid(1.0, 200), 3.0);
  const auto res = solve_ris(m, ell, Vector::Zero(6), p);
  for (Eigen::Index k = 1; k < ell.grid().nodes(); ++k) {
    const Vector v = res.path.velocity(k);
    const Vector xi = -(p.eps * sp.to_dual(v) + p.delta * sp.apply_stiffness(v) + m.grad_I(ell.at(k), res.path.at(k)));
    EXPECT_LE(dist_subdifferential(sp, v, xi), 1e-9);
  }
}

TEST(StateSolver, RepeatedSolvesAgree) {
  const DiscreteSpaces sp = build_spaces(5, 4.0);
  const EnergyModel m(sp, Nonlinearity::doublewell(2.25));
  const LoadPath ell = LoadPath::ramp(sp, TimeGrid(1.0, 100), 3.0);
  SolverOptions a, b;
  b.kernel.tol = 1e-12;
  const auto r1 = solve_ris(m, ell, Vector::Zero(5), {0.05, 0.0, 0.0}, a);
  const auto r2 = solve_ris(m, ell, Vector::Zero(5), {0.05, 0.0, 0.0}, b);
  EXPECT_LE(sup_distance_z(sp, r1.path, r2.path), 10 * a.inner_tol);
}

TEST(StateSolver, SmoothedSolveApproachesExact) {
  const DiscreteSpaces sp = build_spaces(3, 1.0);
  const EnergyModel m(sp, Nonlinearity::sine());
  const LoadPath ell = LoadPath::ramp(sp, TimeGrid(1.0, 50), 2.0);
  const auto exact = solve_ris(m, ell, Vector::Zero(3), {0.1, 0.01, 0.0});
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {1e-2, 1e-3, 1e-4}) {
    const auto sm = solve_ris(m, ell, Vector::Zero(3), {0.1, 0.01, sigma});
    const double gap = sup_distance_z(sp, exact.path, sm.path);
    EXPECT_LT(gap, prev);
    prev = gap;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(StateSolver, AprioriAuditUniformInEps) {
  const Play play;
  const LoadPath ell = play.load(1000);
  std::vector<double> sups, scaled;
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const DissipationParams p{eps, 0.0, 0.0};
    const auto res = solve_ris(play.model, ell, Vector::Zero(1), p);
    const SolveReport r = apriori_audit(play.model, res.path, ell, p);
    sups.push_back(r.sup_z_norm);
    scaled.push_back(eps * r.h1v_seminorm * r.h1v_seminorm);
    EXPECT_GT(r.load_h1_norm, 0.0);
    EXPECT_LE(r.sup_z_norm, r.apriori_bound);
  }
  EXPECT_LT(*std::max_element(sups.begin(), sups.end()) / *std::min_element(sups.begin(), sups.end()), 2.0);
  for (std::size_t i = 1; i < scaled.size(); ++i) EXPECT_LE(scaled[i], scaled[0] * 1.05);
}

TEST(StateSolver, VariationTelescopesForMonotonePath) {
  const Play play;
  const LoadPath ell = play.load(400);
  const auto res = solve_ris(play.model, ell, Vector::Zero(1), play.params);
  EXPECT_NEAR(variation_z(play.sp, res.path), play.sp.norm_z(res.path.at(400) - res.path.at(0)), 1e-12);
  EXPECT_EQ(variation_z(play.sp, StatePath::constant(ell.grid(), Vector::Ones(1))), 0.0);
}

TEST(StateSolver, FitOrder) {
  EXPECT_NEAR(fit_order({1, 2, 4}, {3, 6, 12}), 1.0, 1e-12);
  EXPECT_NEAR(fit_order({1e-4, 1e-2}, {1e-2, 1e-1}), 0.5, 1e-12);
  EXPECT_THROW(fit_order({1}, {1}), DomainError);
  EXPECT_THROW(fit_order({1, 2}, {0, 1}), DomainError);
}

TEST(StateSolver, DeltaStudy) {
  const DiscreteSpaces sp = build_spaces(8, 1.0);
  const EnergyModel m(sp, Nonlinearity::none());
  const LoadPath ell = LoadPath::ramp(sp, TimeGrid(1.0, 500), 4.0);
  const DeltaStudy st = delta_convergence_study(m, ell, Vector::Zero(8), 1e-2, {1e-1, 1e-2, 1e-3, 1e-4});
  EXPECT_TRUE(st.monotone);
  EXPECT_GE(st.order, 0.45);
  EXPECT_LE(st.order, 1.5);
  EXPECT_EQ(st.rows.back().sup_error, 0.0);
  EXPECT_THROW(delta_convergence_study(m, ell, Vector::Zero(8), 1e-2, {1e-3, 1e-2}), DomainError);
  EXPECT_THROW(delta_convergence_study(m, ell, Vector::Zero(8), 1e-2, {}), DomainError);
}

TEST(StateSolver, PathH1Norm) {
  const DiscreteSpaces sp = build_spaces(1, 1.0);
  const TimeGrid g(2.0, 10);
  const LoadPath c = LoadPath::from_function(g, 1, [](double) { return Vector::Constant(1, 1.0); });
  EXPECT_NEAR(path_h1_vstar_norm(sp, c), std::sqrt(2.0) * sp.dual_norm_vstar(Vector::Ones(1)), 1e-12);
  EXPECT_EQ(path_h1_vstar_norm(sp, LoadPath::zero(g, 1)), 0.0);
  const LoadPath r = LoadPath::ramp(sp, g, 1.5, 0.3);
  EXPECT_NEAR(path_h1_vstar_norm(sp, r * 2.0), 2.0 * path_h1_vstar_norm(sp, r), 1e-12);
}
