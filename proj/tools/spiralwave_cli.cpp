#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "spiralwave/cli.hpp"

using namespace spiralwave;

int main(int argc, char** argv) {
  CLI::App app{"Rotating spiral waves in lambda-omega systems: series hierarchy and finite-q sweep"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<double> R;
  std::optional<int> K, N;
  double q = 0.0;
  app.add_option("-c,--config", config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("-o,--out", out_dir, "output directory (overrides [output] dir)");
  app.add_option("--R", R, "outer radius; fixes R for sweep-fit and solve-one");
  app.add_option("--K", K, "highest series order");
  app.add_option("--N", N, "grid nodes");

  auto* validate = app.add_subcommand("validate", "check the model hypotheses");
  auto* series = app.add_subcommand("series", "leading order and the q^2 hierarchy up to K");
  auto* sweep = app.add_subcommand("sweep-fit", "finite-q sweep and the exponential fit of v_inf");
  auto* one = app.add_subcommand("solve-one", "finite-q solve at a single q");
  one->add_option("--q", q, "twist parameter")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code::usage;
  }

  const bool finite_q = sweep->parsed() || one->parsed();
  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (K) cfg.series.K = *K;
    if (finite_q) {
      if (R) {
        cfg.finiteq.R_policy = "fixed";
        cfg.finiteq.R0 = *R;
      }
      if (N) cfg.finiteq.N = *N;
    } else {
      if (R) cfg.grid.R = *R;
      if (N) cfg.grid.N = *N;
    }
    check_config(cfg);
    std::cerr << "config_hash " << config_hash(cfg) << '\n';

    if (validate->parsed()) return cmd_validate(cfg, std::cout);
    if (series->parsed()) return cmd_series(cfg, std::cout);
    if (sweep->parsed()) return cmd_sweep_fit(cfg, std::cout);
    return cmd_solve_one(cfg, q, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::usage;
  } catch (const RangeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::usage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::solver;
  }
}
