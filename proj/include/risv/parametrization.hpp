#ifndef RISV_PARAMETRIZATION_HPP
#define RISV_PARAMETRIZATION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dissipation.hpp"
#include "energy.hpp"
#include "error.hpp"
#include "paths.hpp"

namespace risv {

/// Vanishing-viscosity contact potential p(v, xi) = R(v) + ||v||_V dist_V*(xi, dR(0)).
inline double contact_potential(const DiscreteSpaces& sp, const Vector& v, const Vector& xi) {
  return R(sp, v) + sp.norm_v(v) * dist_vstar(sp, xi);
}

struct ArcLength {
  std::vector<double> s;  ///< s(t_k), one per grid node
  double total = 0.0;     ///< S = s(T)
};

/// s(t) = t + int_0^t p(z', -D_z I(l, z)) with cell-constant velocities and the
/// distance averaged over the two cell ends.
inline ArcLength arclength(const EnergyModel& model, const StatePath& path, const LoadPath& ell) {
  const DiscreteSpaces& sp = model.spaces();
  const TimeGrid& g = path.grid();
  if (!(g == ell.grid())) throw DimensionError("arclength: state and load grids differ");
  ArcLength out;
  out.s.resize(static_cast<std::size_t>(g.nodes()));
  double d_prev = dist_vstar(sp, -model.grad_I(ell.at(0), path.at(0)));
  out.s[0] = 0.0;
  for (Eigen::Index k = 1; k < g.nodes(); ++k) {
    const Vector v = (path.at(k) - path.at(k - 1)) / g.tau();
    const double d = dist_vstar(sp, -model.grad_I(ell.at(k), path.at(k)));
    out.s[static_cast<std::size_t>(k)] =
        out.s[static_cast<std::size_t>(k - 1)] + g.tau() * (1.0 + R(sp, v) + sp.norm_v(v) * 0.5 * (d_prev + d));
    d_prev = d;
  }
  out.total = out.s.back();
  return out;
}

/// (S, t_hat, z_hat) sampled on a uniform arclength grid, with l_hat = l o t_hat,
/// the stability distance and the unstable-set mask.
struct ParametrizedSolution {
  TimeGrid grid{1.0, 1};  ///< physical grid of the underlying viscous solve
  double S = 0.0;
  std::vector<double> s;
  std::vector<double> t_hat;
  Matrix z_hat;
  Matrix ell_hat;
  std::vector<double> dist;
  std::vector<bool> in_G;

  Eigen::Index size() const { return static_cast<Eigen::Index>(s.size()); }

  /// Linear interpolation of z_hat at arclength sigma.
  Vector z_at(double sigma) const {
    const double ds = S / static_cast<double>(size() - 1);
    const double x = std::clamp(sigma / ds, 0.0, static_cast<double>(size() - 1));
    const auto j = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x)), size() - 2);
    const double th = x - static_cast<double>(j);
    return (1.0 - th) * z_hat.col(j) + th * z_hat.col(j + 1);
  }
};

/// Inverts s(t) on a uniform s-grid of m_out nodes. G collects nodes whose
/// stability distance exceeds g_threshold.
inline ParametrizedSolution reparametrize(const EnergyModel& model, const StatePath& path, const LoadPath& ell,
                                          Eigen::Index m_out, double g_threshold = 1e-8) {
  if (m_out < 2) throw DomainError("reparametrize: need at least two output nodes");
  const ArcLength arc = arclength(model, path, ell);
  const TimeGrid& g = path.grid();
  for (std::size_t k = 1; k < arc.s.size(); ++k) {
    if (!(arc.s[k] > arc.s[k - 1])) throw SolverError("reparametrize: arclength is not strictly increasing", 0.0,
                                                      static_cast<int>(k));
  }
  ParametrizedSolution ps;
  ps.grid = g;
  ps.S = arc.total;
  const Eigen::Index n = path.n();
  ps.z_hat.resize(n, m_out);
  ps.ell_hat.resize(n, m_out);
  ps.s.resize(static_cast<std::size_t>(m_out));
  ps.t_hat.resize(static_cast<std::size_t>(m_out));
  ps.dist.resize(static_cast<std::size_t>(m_out));
  ps.in_G.resize(static_cast<std::size_t>(m_out));
  std::size_t cell = 1;
  for (Eigen::Index j = 0; j < m_out; ++j) {
    const double sj = j == m_out - 1 ? arc.total : arc.total * static_cast<double>(j) / static_cast<double>(m_out - 1);
    while (cell + 1 < arc.s.size() && arc.s[cell] < sj) ++cell;
    const double s0 = arc.s[cell - 1], s1 = arc.s[cell];
    const double th = std::clamp((sj - s0) / (s1 - s0), 0.0, 1.0);
    const auto k = static_cast<Eigen::Index>(cell);
    const auto ju = static_cast<std::size_t>(j);
    ps.s[ju] = sj;
    ps.t_hat[ju] = j == m_out - 1 ? g.horizon() : g.t(k - 1) + th * g.tau();
    ps.z_hat.col(j) = (1.0 - th) * path.at(k - 1) + th * path.at(k);
    ps.ell_hat.col(j) = (1.0 - th) * ell.at(k - 1) + th * ell.at(k);
    ps.dist[ju] = dist_vstar(model.spaces(), -model.grad_I(ps.ell_hat.col(j), ps.z_hat.col(j)));
    ps.in_G[ju] = ps.dist[ju] > g_threshold;
  }
  return ps;
}

struct BvResiduals {
  double complementarity = 0.0;  ///< sup t_hat' dist
  double normalization = 0.0;    ///< sup |t_hat' + R[z_hat'] + ||z_hat'|| dist 1_G - 1|
  double energy_identity = 0.0;  ///< sup over s of the energy-identity defect
  double min_t_prime = 0.0;
  double max_t_prime = 0.0;
};

/// Residuals of the parametrized-solution conditions, using forward differences
/// per s-cell and cell-averaged distances.
inline BvResiduals bv_residuals(const EnergyModel& model, const ParametrizedSolution& ps) {
  const DiscreteSpaces& sp = model.spaces();
  BvResiduals r;
  r.min_t_prime = std::numeric_limits<double>::infinity();
  r.max_t_prime = -std::numeric_limits<double>::infinity();
  const double i0 = model.energy_I(ps.ell_hat.col(0), ps.z_hat.col(0));
  double dissipated = 0.0, work = 0.0;
  for (Eigen::Index j = 1; j < ps.size(); ++j) {
    const auto a = static_cast<std::size_t>(j - 1), b = static_cast<std::size_t>(j);
    const double ds = ps.s[b] - ps.s[a];
    const double tp = (ps.t_hat[b] - ps.t_hat[a]) / ds;
    const Vector dz = ps.z_hat.col(j) - ps.z_hat.col(j - 1);
    const double d = 0.5 * (ps.dist[a] + ps.dist[b]);
    const bool g_cell = ps.in_G[a] || ps.in_G[b];
    r.min_t_prime = std::min(r.min_t_prime, tp);
    r.max_t_prime = std::max(r.max_t_prime, tp);
    r.complementarity = std::max(r.complementarity, std::abs(tp) * d);
    const double metric = R(sp, dz) / ds + (g_cell ? sp.norm_v(dz) / ds * d : 0.0);
    r.normalization = std::max(r.normalization, std::abs(tp + metric - 1.0));
    dissipated += R(sp, dz) + (g_cell ? sp.norm_v(dz) * d : 0.0);
    work += 0.5 * (ps.ell_hat.col(j) - ps.ell_hat.col(j - 1)).dot(ps.z_hat.col(j - 1) + ps.z_hat.col(j));
    const double defect = model.energy_I(ps.ell_hat.col(j), ps.z_hat.col(j)) + dissipated - i0 + work;
    r.energy_identity = std::max(r.energy_identity, std::abs(defect));
  }
  if (ps.size() < 2) r.min_t_prime = r.max_t_prime = 1.0;
  return r;
}

struct JumpRecord {
  double t = 0.0;  ///< midpoint of the plateau in physical time
  double t_begin = 0.0;
  double t_end = 0.0;
  double s_begin = 0.0;
  double s_end = 0.0;
  Vector z_before;
  Vector z_after;
};

struct PhysicalSolution {
  StatePath path;
  std::vector<JumpRecord> jumps;
};

/// Collapses plateaus of t_hat (t_hat' < jump_threshold over at least min_cells
/// consecutive s-cells) into jumps, and evaluates z(t_k) = z_hat(max{s : t_hat(s) <= t_k}),
/// i.e. the right limit at every jump time.
inline PhysicalSolution physical_time_solution(const ParametrizedSolution& ps, double jump_threshold = 0.05,
                                               Eigen::Index min_cells = 3) {
  const Eigen::Index m = ps.size();
  PhysicalSolution out{StatePath::constant(ps.grid, ps.z_hat.col(0)), {}};
  std::vector<bool> slow(static_cast<std::size_t>(std::max<Eigen::Index>(m - 1, 0)));
  for (Eigen::Index j = 1; j < m; ++j) {
    const auto a = static_cast<std::size_t>(j - 1);
    slow[a] = (ps.t_hat[a + 1] - ps.t_hat[a]) / (ps.s[a + 1] - ps.s[a]) < jump_threshold;
  }
  for (std::size_t c = 0; c < slow.size();) {
    if (!slow[c]) {
      ++c;
      continue;
    }
    std::size_t e = c;
    while (e < slow.size() && slow[e]) ++e;
    if (static_cast<Eigen::Index>(e - c) >= min_cells) {
      JumpRecord jr;
      jr.s_begin = ps.s[c];
      jr.s_end = ps.s[e];
      jr.t_begin = ps.t_hat[c];
      jr.t_end = ps.t_hat[e];
      jr.t = 0.5 * (jr.t_begin + jr.t_end);
      jr.z_before = ps.z_hat.col(static_cast<Eigen::Index>(c));
      jr.z_after = ps.z_hat.col(static_cast<Eigen::Index>(e));
      out.jumps.push_back(std::move(jr));
    }
    c = e;
  }

  const TimeGrid& g = ps.grid;
  Matrix values(ps.z_hat.rows(), g.nodes());
  std::size_t j = 0;
  for (Eigen::Index k = 0; k < g.nodes(); ++k) {
    const double t = g.t(k);
    while (j + 1 < ps.t_hat.size() && ps.t_hat[j + 1] <= t) ++j;
    if (j + 1 >= ps.t_hat.size() || ps.t_hat[j + 1] <= ps.t_hat[j]) {
      values.col(k) = ps.z_hat.col(static_cast<Eigen::Index>(j));
    } else {
      const double th = std::clamp((t - ps.t_hat[j]) / (ps.t_hat[j + 1] - ps.t_hat[j]), 0.0, 1.0);
      values.col(k) = (1.0 - th) * ps.z_hat.col(static_cast<Eigen::Index>(j)) +
                      th * ps.z_hat.col(static_cast<Eigen::Index>(j + 1));
    }
  }
  out.path = StatePath::from_values(g, std::move(values));
  return out;
}

} // namespace risv

#endif // RISV_PARAMETRIZATION_HPP
