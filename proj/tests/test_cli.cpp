#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "risv/cli.hpp"

using namespace risv;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("risv_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const json& j) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump();
    return p;
  }

  int run_cmd(const std::string& cmd, const std::string& preset, const json& patch = json::object(),
              const std::string& out = "out") {
    Invocation inv;
    inv.command = cmd;
    inv.preset = preset;
    if (!patch.empty()) inv.config_path = write("patch.json", patch).string();
    inv.out_dir = (dir_ / out).string();
    inv.workers = 2;
    std::ostringstream log;
    return run(inv, log, err_);
  }

  json report(const std::string& name, const std::string& out = "out") {
    std::ifstream in(dir_ / out / name);
    return json::parse(in);
  }

  std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }

  std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  }

  fs::path dir_;
  std::ostringstream err_;
};

} // namespace

TEST(Config, DefaultsParse) {
  const ExperimentConfig c = parse_config(json::object());
  EXPECT_EQ(c.spaces.n, 8);
  EXPECT_EQ(c.steps, 1000);
  EXPECT_EQ(c.dissipation.eps, 1e-2);
  EXPECT_EQ(c.m_out(), 4000);
  EXPECT_EQ(c.z0().size(), 8);
  EXPECT_EQ(c.load_path().values().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Config, ErrorsCarryFieldPaths) {
  auto field_of = [](const json& j) {
    try {
      parse_config(j);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of({{"grid", {{"K", 0}}}}), "grid.K");
  EXPECT_EQ(field_of({{"grid", {{"Kx", 10}}}}), "grid.Kx");
  EXPECT_EQ(field_of({{"dissipation", {{"eps", "small"}}}}), "dissipation.eps");
  EXPECT_EQ(field_of({{"studies", {{"delta_list", {1e-3, 1e-2}}}}}), "studies.delta_list");
  EXPECT_EQ(field_of({{"studies", {{"eps_list", {1e-2, -1.0}}}}}), "studies.eps_list[1]");
  EXPECT_EQ(field_of({{"load", {{"kind", "csv"}, {"path", "/nonexistent/load.csv"}}}}), "load.path");
  EXPECT_EQ(field_of({{"control", {{"z_des", {{"kind", "values"}, {"values", {1.0}}}}}}}), "control.z_des.values");
  EXPECT_EQ(field_of({{"nonlinearity", {{"kind", "doublewell"}, {"a", 3.0}}}}), "nonlinearity.a");
  EXPECT_EQ(field_of({{"recovery", {{"ztilde", {{"kind", "csv"}, {"path", "missing.csv"}}}}}}), "recovery.ztilde.path");
}

TEST(Config, HashIsCanonical) {
  const json a = json::parse(R"({"grid": {"T": 1.0, "K": 10}, "seed": 3, "output_dir": "x"})");
  const json b = json::parse(R"({"seed": 3, "output_dir": "y", "grid": {"K": 10, "T": 1.0}})");
  const json c = json::parse(R"({"seed": 4, "output_dir": "x", "grid": {"K": 10, "T": 1.0}})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, PresetsParse) {
  const auto names = list_presets();
  EXPECT_GE(names.size(), 8u);
  for (const auto& n : names) {
    const auto [tree, base] = load_config_tree("", n);
    EXPECT_NO_THROW(parse_config(tree, base)) << n;
  }
}

TEST(Config, CsvLoadRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "risv_csv_load";
  fs::create_directories(dir);
  const DiscreteSpaces sp = build_spaces(2, 1.0);
  const TimeGrid g(1.0, 4);
  const LoadPath ell = LoadPath::ramp(sp, g, 1.5, 0.2);
  write_state_csv(dir / "src.csv", "0", StatePath::constant(g, Vector::Zero(2)), ell);
  // keep t and the load columns
  std::ifstream in(dir / "src.csv");
  std::ofstream out(dir / "load.csv");
  for (std::string l; std::getline(in, l);) {
    if (l[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(l);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    out << cells[0] << ',' << cells[5] << ',' << cells[6] << '\n';
  }
  out.close();
  const json j = {{"spaces", {{"n", 2}}}, {"grid", {{"K", 4}}}, {"load", {{"kind", "csv"}, {"path", "load.csv"}}}};
  const ExperimentConfig c = parse_config(j, dir);
  EXPECT_LE((c.load_path().values() - ell.values()).cwiseAbs().maxCoeff(), 1e-15);
  const json short_grid = {{"spaces", {{"n", 2}}}, {"grid", {{"K", 5}}}, {"load", {{"kind", "csv"}, {"path", "load.csv"}}}};
  EXPECT_THROW(parse_config(short_grid, dir).load_path(), ConfigError);
  fs::remove_all(dir);
}

TEST_F(Cli, ZeroLoadSolveHasZeroResiduals) {
  ASSERT_EQ(run_cmd("solve", "stick"), exit_ok);
  const json r = report("solve_report.json");
  for (const char* k : {"energy_residual", "rate_identity_residual", "var_z", "h1v_seminorm", "stationarity_residual"}) {
    EXPECT_EQ(r["report"][k].get<double>(), 0.0) << k;
  }
}

TEST_F(Cli, PlayPresetMatchesOracle) {
  ASSERT_EQ(run_cmd("solve", "play"), exit_ok);
  const json r = report("solve_report.json");
  EXPECT_NEAR(r["z_final"][0].get<double>(), 1.0, 0.05);
  const auto ls = lines(dir_ / "out" / "solve_trajectory.csv");
  ASSERT_EQ(ls.size(), 1003u);
  EXPECT_EQ(ls[0], "# config_hash: " + r["config_hash"].get<std::string>());
  EXPECT_EQ(ls[1], "t,z1,v1,l1");
  EXPECT_EQ(ls[2].substr(0, 2), "0,");
}

TEST_F(Cli, RerunIsByteIdentical) {
  ASSERT_EQ(run_cmd("solve", "doublewell", json::object(), "a"), exit_ok);
  ASSERT_EQ(run_cmd("solve", "doublewell", json::object(), "b"), exit_ok);
  EXPECT_EQ(slurp(dir_ / "a" / "solve_trajectory.csv"), slurp(dir_ / "b" / "solve_trajectory.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "solve_report.json"), slurp(dir_ / "b" / "solve_report.json"));
}

TEST_F(Cli, SeedChangesHashOnly) {
  ASSERT_EQ(run_cmd("solve", "stick", json::object(), "a"), exit_ok);
  ASSERT_EQ(run_cmd("solve", "stick", {{"seed", 99}}, "b"), exit_ok);
  const auto a = lines(dir_ / "a" / "solve_trajectory.csv");
  const auto b = lines(dir_ / "b" / "solve_trajectory.csv");
  EXPECT_NE(a[0], b[0]);
  EXPECT_EQ(std::vector<std::string>(a.begin() + 1, a.end()), std::vector<std::string>(b.begin() + 1, b.end()));
}

TEST_F(Cli, StickParametrizationIsIdentity) {
  ASSERT_EQ(run_cmd("parametrize", "stick"), exit_ok);
  const json r = report("parametrize_report.json");
  for (const char* k : {"complementarity", "normalization", "energy_identity"}) {
    ASSERT_TRUE(r["residuals"].contains(k)) << k;
    EXPECT_LE(r["residuals"][k].get<double>(), 1e-10) << k;
  }
  const auto ls = lines(dir_ / "out" / "parametrized.csv");
  EXPECT_EQ(ls[1].substr(0, 8), "t_hat,s,");
  for (std::size_t i = 2; i < ls.size(); ++i) {
    std::stringstream ss(ls[i]);
    std::string a, b;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    EXPECT_NEAR(std::stod(a), std::stod(b), 1e-12);
  }
}

TEST_F(Cli, PlayArclengthIsTPlusOne) {
  ASSERT_EQ(run_cmd("parametrize", "play"), exit_ok);
  const json r = report("parametrize_report.json");
  EXPECT_NEAR(r["S"].get<double>(), 2.0, 0.05);
  EXPECT_EQ(r["jumps"].size(), 0u);
}

TEST_F(Cli, DoubleWellReportsOneJump) {
  ASSERT_EQ(run_cmd("parametrize", "doublewell"), exit_ok);
  const json r = report("parametrize_report.json");
  ASSERT_EQ(r["jumps"].size(), 1u);
  EXPECT_GT(r["jumps"][0]["state_gap"].get<double>(), 0.0);
}

TEST_F(Cli, DeltaSweepTable) {
  ASSERT_EQ(run_cmd("sweep", "delta_study", {{"grid", {{"K", 500}}}}), exit_ok);
  const auto ls = lines(dir_ / "out" / "delta_sweep.csv");
  EXPECT_EQ(ls[1], "delta,sup_error,order");
  EXPECT_EQ(ls.size(), 6u);
  const json r = report("sweep_report.json");
  EXPECT_GE(r["order"].get<double>(), 0.45);
  EXPECT_LE(r["order"].get<double>(), 1.5);
  EXPECT_TRUE(r["monotone"].get<bool>());
}

TEST_F(Cli, EmptySweepListIsRejected) {
  EXPECT_EQ(run_cmd("sweep", "delta_study", {{"studies", {{"delta_list", json::array()}}}}), exit_config);
  EXPECT_NE(err_.str().find("studies.delta_list"), std::string::npos);
}

TEST_F(Cli, TauSweepTable) {
  ASSERT_EQ(run_cmd("sweep", "play"), exit_ok);
  const auto ls = lines(dir_ / "out" / "tau_sweep.csv");
  EXPECT_EQ(ls[1], "tau,K,energy_residual,rate_residual");
  EXPECT_EQ(ls.size(), 5u);
}

TEST_F(Cli, StationaryOptimizationDoesNotLoseToCandidate) {
  ASSERT_EQ(run_cmd("optimize", "stationary"), exit_ok);
  const json r = report("optimize_report.json");
  EXPECT_LE(r["result"]["J_star"].get<double>(), r["J_initial"].get<double>() + 1e-12);
  EXPECT_TRUE(r["result"]["feasible"].get<bool>());
  EXPECT_LE(r["gradient_check"]["max_relative_error"].get<double>(), 1e-5);
}

TEST_F(Cli, InfeasibleOptimizationFlags) {
  const json patch = {{"control", {{"penalty_weight", 0.0}, {"max_iterations", 0}, {"sigmas", {1e-2}}, {"max_rounds", 1},
                                   {"gradient_checks", 0}}},
                      {"studies", {{"delta_list", nullptr}}},
                      {"load", {{"kind", "affine"}, {"base", {0.0, 0.0, 0.0}}, {"slope", {17.0, 53.0, 17.0}}}}};
  EXPECT_EQ(run_cmd("optimize", "control_convex", patch), exit_infeasible);
  EXPECT_FALSE(report("optimize_report.json")["result"]["feasible"].get<bool>());
}

TEST_F(Cli, RecoveryWithoutNonlinearityKeepsLoad) {
  ASSERT_EQ(run_cmd("recover", "recovery", {{"nonlinearity", {{"kind", "none"}}}}), exit_ok);
  const json r = report("recovery_report.json");
  EXPECT_EQ(r["eta_bar"].get<double>(), 0.0);
  const auto ls = lines(dir_ / "out" / "recovery.csv");
  ASSERT_EQ(ls.size(), 5u);
  for (std::size_t i = 2; i < ls.size(); ++i) {
    std::stringstream ss(ls[i]);
    std::string eps, sg, lg;
    std::getline(ss, eps, ',');
    std::getline(ss, sg, ',');
    std::getline(ss, lg, ',');
    EXPECT_EQ(std::stod(lg), 0.0);
  }
}

TEST_F(Cli, MissingCandidateFileIsConfigError) {
  EXPECT_EQ(run_cmd("recover", "recovery", {{"recovery", {{"ztilde", {{"kind", "csv"}, {"path", "nowhere.csv"}}}}}}),
            exit_config);
  EXPECT_NE(err_.str().find("recovery.ztilde.path"), std::string::npos);
}

TEST_F(Cli, RejectedCandidateFlags) {
  EXPECT_EQ(run_cmd("recover", "recovery", {{"recovery", {{"load", "config"}}}}), exit_infeasible);
  EXPECT_FALSE(report("recovery_report.json")["check"]["ok"].get<bool>());
}

TEST_F(Cli, SolverFailureExitCode) {
  EXPECT_EQ(run_cmd("solve", "doublewell", {{"solver", {{"max_inner", 1}, {"inner_tol", 1e-14}}}}), exit_solver);
}

TEST_F(Cli, UnknownPresetAndMissingConfig) {
  EXPECT_EQ(run_cmd("solve", "no_such_preset"), exit_config);
  Invocation inv;
  inv.command = "solve";
  std::ostringstream log;
  EXPECT_EQ(run(inv, log, err_), exit_config);
  inv.config_path = (dir_ / "absent.json").string();
  EXPECT_EQ(run(inv, log, err_), exit_config);
}

TEST_F(Cli, EveryOutputEmbedsHash) {
  ASSERT_EQ(run_cmd("recover", "recovery"), exit_ok);
  const std::string hash = report("recovery_report.json")["config_hash"].get<std::string>();
  for (const auto& e : fs::directory_iterator(dir_ / "out")) {
    const std::string body = slurp(e.path());
    EXPECT_NE(body.find(hash), std::string::npos) << e.path();
  }
}
