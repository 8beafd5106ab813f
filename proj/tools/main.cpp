#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mmcopt/driver.hpp"

namespace {

constexpr const char* kOverrideKeys[] = {"problem", "solver",   "nelx", "nely",
                                         "eta",     "eps_star", "delta", "tol_x",
                                         "max_iter", "seed",    "output_dir"};

void add_override_options(CLI::App* cmd,
                          std::vector<std::pair<std::string, std::string>>& sink) {
  for (const char* key : kOverrideKeys) {
    const std::string k = key;
    cmd->add_option_function<std::string>(
        "--" + k, [&sink, k](const std::string& v) { sink.emplace_back(k, v); },
        "override config key '" + k + "'");
  }
}

mmcopt::RunConfig make_config(const std::string& config_path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  mmcopt::RunConfig cfg =
      config_path.empty() ? mmcopt::RunConfig{} : mmcopt::parse_config_file(config_path);
  for (const auto& [k, v] : overrides) mmcopt::apply_override(cfg, k, v);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Topology optimization with moving morphable components and a "
      "reanalysis-accelerated two-grid solver"};
  app.require_subcommand(1);

  std::string run_config, cmp_config;
  std::vector<std::pair<std::string, std::string>> run_overrides, cmp_overrides;

  CLI::App* run = app.add_subcommand("run", "optimize one benchmark and write its artifacts");
  run->add_option("--config", run_config, "key=value config file");
  add_override_options(run, run_overrides);

  CLI::App* cmp = app.add_subcommand(
      "compare", "run the full-factorization and reanalysis solvers and report the differences");
  cmp->add_option("--config", cmp_config, "key=value config file");
  add_override_options(cmp, cmp_overrides);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return mmcopt::run_command(make_config(run_config, run_overrides));
    return mmcopt::compare_command(make_config(cmp_config, cmp_overrides));
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
}
