#ifndef RISV_CONFIG_HPP
#define RISV_CONFIG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "control.hpp"
#include "parametrization.hpp"
#include "state_solver.hpp"

namespace risv {

using json = nlohmann::json;

namespace detail {

/// Read access to one config object with dotted-path error messages.
/// Keys not in `allowed` are rejected so typos do not silently fall back to defaults.
class Node {
public:
  Node(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j_.items()) {
      if (!ok.count(k)) throw ConfigError(at(k), "unknown key");
    }
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const std::string& key) const { return j_.at(key); }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(at(key), "must be finite");
    return x;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    return v.get<std::int64_t>();
  }

  std::string string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of numbers");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  Vector vector(const std::string& key) const {
    const std::vector<double> v = numbers(key);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  const json& object(const std::string& key) const {
    static const json empty = json::object();
    return has(key) ? j_.at(key) : empty;
  }

private:
  const json& j_;
  std::string path_;
};

inline void require_decreasing(const std::vector<double>& xs, const std::string& field) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0)) throw ConfigError(field + "[" + std::to_string(i) + "]", "must be positive");
    if (i > 0 && !(xs[i] < xs[i - 1])) throw ConfigError(field, "must be strictly decreasing");
  }
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path q(p);
  return q.is_absolute() ? q : base / q;
}

inline void require_file(const std::filesystem::path& p, const std::string& field) {
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(field, "file not found: " + p.string());
}

/// Reads a trajectory CSV (`t,c1,...,cn`, optional leading `#` lines) sampled on `grid`.
inline Matrix read_trajectory_csv(const std::filesystem::path& file, const TimeGrid& grid, Eigen::Index n,
                                  const std::string& field) {
  std::ifstream in(file);
  if (!in) throw ConfigError(field, "cannot open " + file.string());
  std::string line;
  bool header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError(field, file.string() + ": bad number '" + cell + "' in row " + std::to_string(rows.size() + 1));
      }
    }
    rows.push_back(std::move(row));
  }
  if (static_cast<Eigen::Index>(rows.size()) != grid.nodes()) {
    throw ConfigError(field, file.string() + ": expected " + std::to_string(grid.nodes()) + " rows, got " +
                                 std::to_string(rows.size()));
  }
  Matrix m(n, grid.nodes());
  for (Eigen::Index k = 0; k < grid.nodes(); ++k) {
    const auto& r = rows[static_cast<std::size_t>(k)];
    if (static_cast<Eigen::Index>(r.size()) != n + 1) {
      throw ConfigError(field, file.string() + ": row " + std::to_string(k + 1) + " needs " + std::to_string(n + 1) + " columns");
    }
    if (std::abs(r[0] - grid.t(k)) > 1e-9 * (1.0 + grid.horizon())) {
      throw ConfigError(field, file.string() + ": row " + std::to_string(k + 1) + " is not on the time grid");
    }
    for (Eigen::Index i = 0; i < n; ++i) m(i, k) = r[static_cast<std::size_t>(i + 1)];
  }
  return m;
}

} // namespace detail

struct SpacesSpec {
  std::string kind = "fem";  ///< fem | scalar
  Eigen::Index n = 8;
  double length = 1.0;
  double kappa = 2.0;
  double stiffness = 1.0;
  double mass = 1.0;
  double weight = 1.0;

  DiscreteSpaces build() const {
    return kind == "scalar" ? DiscreteSpaces::scalar(stiffness, mass, weight) : build_spaces(n, length, kappa);
  }
};

struct NonlinearitySpec {
  std::string kind = "none";
  double a = 2.25;

  Nonlinearity build() const {
    if (kind == "doublewell") return Nonlinearity::doublewell(a);
    if (kind == "sine") return Nonlinearity::sine();
    return Nonlinearity::none();
  }
};

/// zero | constant(value) | values
struct StateSpec {
  std::string kind = "zero";
  double value = 0.0;
  Vector values;

  Vector build(Eigen::Index n) const {
    if (kind == "constant") return Vector::Constant(n, value);
    if (kind == "values") return values;
    return Vector::Zero(n);
  }
};

/// zero | ramp(rate, base) | affine(base, slope) | csv(path); `equilibrium` adds A z0 + DF(z0).
struct LoadSpec {
  std::string kind = "zero";
  double rate = 0.0;
  double base = 0.0;
  Vector base_values;
  Vector slope_values;
  std::filesystem::path file;
  bool equilibrium = false;

  LoadPath build(const EnergyModel& model, const TimeGrid& grid, const Vector& z0) const {
    const DiscreteSpaces& sp = model.spaces();
    const Eigen::Index n = sp.n();
    Matrix vals;
    if (kind == "ramp") {
      vals = LoadPath::ramp(sp, grid, rate, base).values();
    } else if (kind == "affine") {
      vals = LoadPath::from_function(grid, n, [&](double t) -> Vector { return base_values + t * slope_values; }).values();
    } else if (kind == "csv") {
      vals = detail::read_trajectory_csv(file, grid, n, "load.path");
    } else {
      vals = Matrix::Zero(n, grid.nodes());
    }
    if (equilibrium) vals.colwise() += sp.apply_stiffness(z0) + model.DF(z0);
    return LoadPath(grid, std::move(vals));
  }
};

struct ParametrizationSpec {
  Eigen::Index m_out = 0;  ///< 0: four times the number of steps
  double g_threshold = 1e-8;
  double jump_threshold = 0.05;
  Eigen::Index min_cells = 3;
};

struct ControlSpec {
  double beta = 1e-2;
  std::string target = "free";  ///< free | values | uncontrolled
  Vector z_des;
  double penalty_weight = 10.0;
  PenaltySchedule schedule{};
  int max_iterations = 500;
  double gradient_tol = 1e-9;
  int gradient_checks = 10;
};

/// Sweep lists. `sweep` selects the table written by the sweep command.
struct StudySpec {
  std::string sweep = "delta";  ///< delta | variation | tau
  std::vector<double> eps_list;
  std::vector<double> delta_list;
  std::vector<Eigen::Index> steps_list;
};

struct RecoverySpec {
  std::string ztilde = "quadratic";  ///< quadratic | csv
  Vector z0;
  Vector accel;
  std::filesystem::path file;
  std::string load = "slip";  ///< slip | config
  double rho = 0.05;
  double radius_factor = 2.0;
  double delta = 0.0;
};

struct ExperimentConfig {
  SpacesSpec spaces;
  NonlinearitySpec nonlinearity;
  double horizon = 1.0;
  Eigen::Index steps = 1000;
  DissipationParams dissipation{};
  StateSpec initial_state;
  LoadSpec load;
  SolverOptions solver{};
  ParametrizationSpec parametrization;
  ControlSpec control;
  StudySpec studies;
  RecoverySpec recovery;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  json source;  ///< the effective config tree the hash is taken over

  TimeGrid grid() const { return TimeGrid(horizon, steps); }
  EnergyModel model() const { return EnergyModel(spaces.build(), nonlinearity.build()); }
  Vector z0() const { return initial_state.build(spaces.kind == "scalar" ? 1 : spaces.n); }
  LoadPath load_path() const {
    const EnergyModel m = model();
    return load.build(m, grid(), z0());
  }
  Eigen::Index m_out() const { return parametrization.m_out > 0 ? parametrization.m_out : 4 * steps; }
};

/// Parses and validates a config tree. Relative file names resolve against `base`.
inline ExperimentConfig parse_config(const json& root, const std::filesystem::path& base = ".") {
  using detail::Node;
  ExperimentConfig c;
  c.source = root;
  const Node top(root, "", {"spaces", "nonlinearity", "grid", "dissipation", "initial_state", "load", "solver",
                            "parametrization", "control", "studies", "recovery", "seed", "output_dir", "name",
                            "description"});

  const Node sp(top.object("spaces"), "spaces", {"kind", "n", "L", "kappa", "stiffness", "mass", "weight"});
  c.spaces.kind = sp.string("kind", "fem");
  if (c.spaces.kind != "fem" && c.spaces.kind != "scalar") throw ConfigError("spaces.kind", "expected fem or scalar");
  c.spaces.n = sp.integer("n", 8);
  c.spaces.length = sp.number("L", 1.0);
  c.spaces.kappa = sp.number("kappa", 2.0);
  c.spaces.stiffness = sp.number("stiffness", 1.0);
  c.spaces.mass = sp.number("mass", 1.0);
  c.spaces.weight = sp.number("weight", 1.0);
  if (c.spaces.kind == "fem") {
    if (c.spaces.n < 1) throw ConfigError("spaces.n", "need at least one node");
    if (!(c.spaces.length > 0.0)) throw ConfigError("spaces.L", "must be positive");
    if (!(c.spaces.kappa >= 2.0 && c.spaces.kappa < 6.0)) throw ConfigError("spaces.kappa", "must lie in [2, 6)");
  } else {
    c.spaces.n = 1;
    for (const char* k : {"stiffness", "mass", "weight"}) {
      if (!(sp.number(k, 1.0) > 0.0)) throw ConfigError(sp.at(k), "must be positive");
    }
  }

  const Node nl(top.object("nonlinearity"), "nonlinearity", {"kind", "a"});
  c.nonlinearity.kind = nl.string("kind", "none");
  c.nonlinearity.a = nl.number("a", 2.25);
  if (c.nonlinearity.kind != "none" && c.nonlinearity.kind != "doublewell" && c.nonlinearity.kind != "sine") {
    throw ConfigError("nonlinearity.kind", "expected none, doublewell or sine");
  }
  if (c.nonlinearity.kind == "doublewell" && !(c.nonlinearity.a > 2.0 && c.nonlinearity.a < 2.5)) {
    throw ConfigError("nonlinearity.a", "must lie in (2, 2.5)");
  }

  const Node gr(top.object("grid"), "grid", {"T", "K"});
  c.horizon = gr.number("T", 1.0);
  c.steps = gr.integer("K", 1000);
  if (!(c.horizon > 0.0)) throw ConfigError("grid.T", "must be positive");
  if (c.steps < 1) throw ConfigError("grid.K", "need at least one step");

  const Node ds(top.object("dissipation"), "dissipation", {"eps", "delta", "sigma"});
  c.dissipation = {ds.number("eps", 1e-2), ds.number("delta", 0.0), ds.number("sigma", 0.0)};
  if (!(c.dissipation.eps > 0.0)) throw ConfigError("dissipation.eps", "must be positive");
  if (c.dissipation.delta < 0.0) throw ConfigError("dissipation.delta", "must be nonnegative");
  if (c.dissipation.sigma < 0.0) throw ConfigError("dissipation.sigma", "must be nonnegative");

  const Eigen::Index n = c.spaces.n;
  auto check_size = [&](const Vector& v, const std::string& field) {
    if (v.size() != n) throw ConfigError(field, "expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
  };

  const Node is(top.object("initial_state"), "initial_state", {"kind", "value", "values"});
  c.initial_state.kind = is.string("kind", "zero");
  c.initial_state.value = is.number("value", 0.0);
  if (c.initial_state.kind == "values") {
    c.initial_state.values = is.vector("values");
    check_size(c.initial_state.values, "initial_state.values");
  } else if (c.initial_state.kind != "zero" && c.initial_state.kind != "constant") {
    throw ConfigError("initial_state.kind", "expected zero, constant or values");
  }

  const Node ld(top.object("load"), "load", {"kind", "rate", "base", "slope", "path", "equilibrium"});
  c.load.kind = ld.string("kind", "zero");
  c.load.equilibrium = ld.boolean("equilibrium", false);
  if (c.load.kind == "ramp") {
    c.load.rate = ld.number("rate", 0.0);
    c.load.base = ld.number("base", 0.0);
  } else if (c.load.kind == "affine") {
    c.load.base_values = ld.has("base") ? ld.vector("base") : Vector::Zero(n);
    c.load.slope_values = ld.has("slope") ? ld.vector("slope") : Vector::Zero(n);
    check_size(c.load.base_values, "load.base");
    check_size(c.load.slope_values, "load.slope");
  } else if (c.load.kind == "csv") {
    if (!ld.has("path")) throw ConfigError("load.path", "required for a csv load");
    c.load.file = detail::resolve(base, ld.string("path", ""));
    detail::require_file(c.load.file, "load.path");
  } else if (c.load.kind != "zero") {
    throw ConfigError("load.kind", "expected zero, ramp, affine or csv");
  }

  const Node so(top.object("solver"), "solver", {"inner_tol", "max_inner", "strict_stability", "check_apriori"});
  c.solver.inner_tol = so.number("inner_tol", c.solver.inner_tol);
  c.solver.max_inner = static_cast<int>(so.integer("max_inner", c.solver.max_inner));
  c.solver.strict_stability = so.boolean("strict_stability", false);
  c.solver.check_apriori = so.boolean("check_apriori", true);
  if (!(c.solver.inner_tol > 0.0)) throw ConfigError("solver.inner_tol", "must be positive");
  if (c.solver.max_inner < 1) throw ConfigError("solver.max_inner", "must be at least 1");

  const Node pa(top.object("parametrization"), "parametrization", {"m_out", "g_threshold", "jump_threshold", "min_cells"});
  c.parametrization.m_out = pa.integer("m_out", 0);
  c.parametrization.g_threshold = pa.number("g_threshold", 1e-8);
  c.parametrization.jump_threshold = pa.number("jump_threshold", 0.05);
  c.parametrization.min_cells = pa.integer("min_cells", 3);
  if (c.parametrization.m_out == 1 || c.parametrization.m_out < 0) throw ConfigError("parametrization.m_out", "need 0 (default) or at least 2");
  if (c.parametrization.min_cells < 1) throw ConfigError("parametrization.min_cells", "must be at least 1");

  const Node co(top.object("control"), "control", {"beta", "z_des", "penalty_weight", "penalty_factor", "max_rounds",
                                                   "sigmas", "max_iterations", "gradient_tol", "gradient_checks"});
  c.control.beta = co.number("beta", 1e-2);
  if (!(c.control.beta > 0.0)) throw ConfigError("control.beta", "must be positive");
  {
    const Node zd(co.object("z_des"), "control.z_des", {"kind", "values"});
    c.control.target = zd.string("kind", "free");
    if (c.control.target == "values") {
      c.control.z_des = zd.vector("values");
      check_size(c.control.z_des, "control.z_des.values");
    } else if (c.control.target != "free" && c.control.target != "uncontrolled") {
      throw ConfigError("control.z_des.kind", "expected free, values or uncontrolled");
    }
  }
  c.control.penalty_weight = co.number("penalty_weight", 10.0);
  c.control.schedule.factor = co.number("penalty_factor", 10.0);
  c.control.schedule.max_rounds = static_cast<int>(co.integer("max_rounds", 6));
  if (co.has("sigmas")) c.control.schedule.sigmas = co.numbers("sigmas");
  c.control.max_iterations = static_cast<int>(co.integer("max_iterations", 500));
  c.control.gradient_tol = co.number("gradient_tol", 1e-9);
  c.control.gradient_checks = static_cast<int>(co.integer("gradient_checks", 10));
  if (c.control.penalty_weight < 0.0) throw ConfigError("control.penalty_weight", "must be nonnegative");
  if (!(c.control.schedule.factor > 1.0)) throw ConfigError("control.penalty_factor", "must exceed 1");
  if (c.control.schedule.max_rounds < 1) throw ConfigError("control.max_rounds", "must be at least 1");
  if (c.control.schedule.sigmas.empty()) throw ConfigError("control.sigmas", "must not be empty");
  detail::require_decreasing(c.control.schedule.sigmas, "control.sigmas");
  if (c.control.max_iterations < 0) throw ConfigError("control.max_iterations", "must be nonnegative");
  if (c.control.gradient_checks < 0) throw ConfigError("control.gradient_checks", "must be nonnegative");

  const Node st(top.object("studies"), "studies", {"sweep", "eps_list", "delta_list", "K_list"});
  c.studies.sweep = st.string("sweep", "delta");
  if (c.studies.sweep != "delta" && c.studies.sweep != "variation" && c.studies.sweep != "tau") {
    throw ConfigError("studies.sweep", "expected delta, variation or tau");
  }
  c.studies.eps_list = st.numbers("eps_list");
  c.studies.delta_list = st.numbers("delta_list");
  detail::require_decreasing(c.studies.eps_list, "studies.eps_list");
  detail::require_decreasing(c.studies.delta_list, "studies.delta_list");
  for (double k : st.numbers("K_list")) {
    if (!(k >= 1.0) || k != std::floor(k)) throw ConfigError("studies.K_list", "entries must be positive integers");
    if (!c.studies.steps_list.empty() && !(k > static_cast<double>(c.studies.steps_list.back()))) {
      throw ConfigError("studies.K_list", "must be strictly increasing");
    }
    c.studies.steps_list.push_back(static_cast<Eigen::Index>(k));
  }

  const Node rc(top.object("recovery"), "recovery", {"ztilde", "load", "rho", "radius_factor", "delta"});
  {
    const Node zt(rc.object("ztilde"), "recovery.ztilde", {"kind", "z0", "accel", "path"});
    c.recovery.ztilde = zt.string("kind", "quadratic");
    if (c.recovery.ztilde == "quadratic") {
      c.recovery.z0 = zt.has("z0") ? zt.vector("z0") : Vector::Zero(n);
      c.recovery.accel = zt.has("accel") ? zt.vector("accel") : Vector::Zero(n);
      check_size(c.recovery.z0, "recovery.ztilde.z0");
      check_size(c.recovery.accel, "recovery.ztilde.accel");
    } else if (c.recovery.ztilde == "csv") {
      if (!zt.has("path")) throw ConfigError("recovery.ztilde.path", "required for a csv candidate");
      c.recovery.file = detail::resolve(base, zt.string("path", ""));
      detail::require_file(c.recovery.file, "recovery.ztilde.path");
    } else {
      throw ConfigError("recovery.ztilde.kind", "expected quadratic or csv");
    }
  }
  c.recovery.load = rc.string("load", "slip");
  if (c.recovery.load != "slip" && c.recovery.load != "config") throw ConfigError("recovery.load", "expected slip or config");
  c.recovery.rho = rc.number("rho", 0.05);
  c.recovery.radius_factor = rc.number("radius_factor", 2.0);
  c.recovery.delta = rc.number("delta", 0.0);
  if (!(c.recovery.rho > 0.0 && c.recovery.rho <= 1.0)) throw ConfigError("recovery.rho", "must lie in (0, 1]");
  if (!(c.recovery.radius_factor >= 1.0)) throw ConfigError("recovery.radius_factor", "must be at least 1");
  if (c.recovery.delta < 0.0) throw ConfigError("recovery.delta", "must be nonnegative");

  const std::int64_t seed = top.integer("seed", 1);
  if (seed < 0) throw ConfigError("seed", "must be nonnegative");
  c.seed = static_cast<std::uint64_t>(seed);
  c.output_dir = top.string("output_dir", "out");
  return c;
}

/// 64-bit FNV-1a of the canonical dump (sorted keys) of the config tree, minus output_dir.
inline std::string config_hash(const json& config) {
  json j = config;
  if (j.is_object()) j.erase("output_dir");
  const std::string s = j.dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json read_json_file(const std::filesystem::path& p, const std::string& field) {
  std::ifstream in(p);
  if (!in) throw ConfigError(field, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(field, p.string() + ": " + e.what());
  }
}

/// RISV_PRESET_DIR from the environment, else the directory baked in at build time.
inline std::filesystem::path preset_dir() {
  if (const char* env = std::getenv("RISV_PRESET_DIR"); env && *env) return env;
#ifdef RISV_DEFAULT_PRESET_DIR
  return RISV_DEFAULT_PRESET_DIR;
#else
  return "presets";
#endif
}

inline std::vector<std::string> list_presets() {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(preset_dir(), ec)) {
    if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

/// The preset (if any) with the config file merged over it. Returns the merged tree
/// and the directory that relative paths resolve against.
inline std::pair<json, std::filesystem::path> load_config_tree(const std::string& config_path, const std::string& preset) {
  json tree = json::object();
  std::filesystem::path base = ".";
  if (!preset.empty()) {
    const std::filesystem::path p = preset_dir() / (preset + ".json");
    if (!std::filesystem::is_regular_file(p)) throw ConfigError("--preset", "unknown preset '" + preset + "'");
    tree = read_json_file(p, "--preset");
    base = p.parent_path();
  }
  if (!config_path.empty()) {
    const std::filesystem::path p(config_path);
    if (!std::filesystem::is_regular_file(p)) throw ConfigError("--config", "file not found: " + config_path);
    const json patch = read_json_file(p, "--config");
    if (!patch.is_object()) throw ConfigError("--config", "top level must be an object");
    tree.merge_patch(patch);
    base = p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
  }
  if (!tree.is_object()) throw ConfigError("<root>", "top level must be an object");
  return {tree, base};
}

} // namespace risv

#endif // RISV_CONFIG_HPP
