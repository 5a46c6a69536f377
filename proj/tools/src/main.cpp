#include <iostream>

#include <CLI11.hpp>

#include "aggnash/cli/commands.hpp"
#include "aggnash/errors.hpp"

namespace cli = aggnash::cli;

int main(int argc, char** argv) {
  CLI::App app{"Distributed equilibrium seeking for aggregative games"};
  app.set_version_flag("--version", std::string("aggnash ") + cli::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string mode;
  long long seed = -1;
  std::string profile_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (INI)")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "Seed for sampling (overrides run.seed)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--mode", mode, "Equilibrium notion")
        ->check(CLI::IsMember({"nash", "wardrop"}));
  };
  CLI::App* validate = app.add_subcommand("validate", "Check assumptions and report constants");
  CLI::App* solve = app.add_subcommand("solve", "Run the distributed iteration");
  CLI::App* sweep = app.add_subcommand("sweep", "Solve for each nu in sweep.nu");
  CLI::App* epsilon = app.add_subcommand("epsilon", "Quality of a given profile");
  for (CLI::App* sub : {validate, solve, sweep, epsilon}) add_common(sub);
  epsilon->add_option("--profile", profile_path, "Profile CSV (agent,component,value)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitValidation;
  }

  try {
    cli::ExperimentConfig cfg = cli::load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!mode.empty()) cfg.solver.mode = mode == "nash" ? aggnash::Mode::Nash : aggnash::Mode::Wardrop;

    if (*validate) return cli::cmd_validate(cfg, std::cout);
    if (*solve) return cli::cmd_solve(cfg, std::cerr);
    if (*sweep) return cli::cmd_sweep(cfg, std::cerr);
    return cli::cmd_epsilon(cfg, profile_path, std::cerr);
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kExitValidation;
  } catch (const aggnash::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return cli::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitRuntime;
  }
}
