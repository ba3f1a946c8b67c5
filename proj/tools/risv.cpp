#include <CLI11.hpp>

#include "risv/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Viscous and rate-independent evolutions: solve, parametrize, sweep, optimize, recover"};
  app.require_subcommand(1);
  risv::Invocation inv;
  std::int64_t seed = -1;

  const std::vector<std::pair<const char*, const char*>> commands{
      {"solve", "viscous solve; writes the trajectory CSV and a report"},
      {"parametrize", "arclength reparametrization, residuals and jump detection"},
      {"sweep", "delta, variation or tau rate tables"},
      {"optimize", "optimal load with end-time stability constraint"},
      {"recover", "reverse approximation of a differential solution"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", inv.config_path, "experiment config (JSON), merged over the preset");
    sub->add_option("--preset", inv.preset, "named preset from the presets directory");
    sub->add_option("--out", inv.out_dir, "output directory (overrides output_dir)");
    sub->add_option("--workers", inv.workers, "worker threads for sweeps (default: hardware threads)");
    sub->add_option("--seed", seed, "random seed (overrides seed)")->check(CLI::NonNegativeNumber);
    sub->callback([&inv, name = std::string(name)] { inv.command = name; });
  }
  auto* list = app.add_subcommand("presets", "list available presets");
  list->callback([] {
    for (const auto& p : risv::list_presets()) std::cout << p << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : risv::exit_config;
  }
  if (inv.command.empty()) return 0;
  if (seed >= 0) inv.seed = static_cast<std::uint64_t>(seed);
  return risv::run(inv);
}
