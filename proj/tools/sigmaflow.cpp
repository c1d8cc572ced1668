#include <iostream>

#include <CLI11.hpp>

#include "sigmaflow/tasks.hpp"

int main(int argc, char** argv) {
  using namespace sigmaflow;
  CLI::App app{"Sigma-model geometry, Wick algebra and Ricci-flow checks"};
  std::string task, config_path, out, tag;
  std::uint64_t seed = 0;
  app.add_option("task", task, "flow | hadamard | wick-check | renorm-check | report-all")
      ->required()
      ->check(CLI::IsMember(task_names()));
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--out", out, "output root (default $SIGMAFLOW_OUT, then ./out)");
  auto* seed_opt = app.add_option("--seed", seed, "overrides wick.seed");
  app.add_option("--tag", tag, "run directory name (default: config digest)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  RunConfig cfg;
  try {
    cfg = parse_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  if (*seed_opt) cfg.wick.seed = seed;

  try {
    const std::string dir = run_directory(out, task, tag, cfg);
    const Report r = run_task(cfg, task, dir);
    std::cout << r.table() << "output: " << dir << '\n';
    return r.pass() ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
