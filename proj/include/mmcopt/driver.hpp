#pragma once

#include <string>
#include <vector>

#include "mmcopt/optimizer.hpp"
#include "mmcopt/problems.hpp"

namespace mmcopt {

struct RunConfig {
  std::string problem = "cantilever";
  int nelx = 80;
  int nely = 40;
  std::string solver = "ira";  // "full" | "ira"
  double eta = -1.0;           // < 0: use the problem default
  double eps_star = 1e-2;
  double delta = -1.0;  // < 0: use the problem default
  double tol_x = 1e-3;  // on normalized design variables
  int max_iter = 600;
  unsigned seed = 0;  // 0: no layout jitter
  std::string output_dir = "out";
};

// flat key=value text, '#' comments; unknown keys are an error
RunConfig parse_config_file(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double constraint = 0.0;
  double max_dx = 0.0;
  std::string opt_mode;     // "mma" | "gcmma"
  std::string solver_mode;  // "full-factorization" | "reanalysis"
  int n_d = 0;
  int v_cycles = 0;
  double wall_s = 0.0;  // cumulative, file I/O excluded
};

struct RunResult {
  std::vector<IterationRecord> history;
  std::vector<Component> final_components;
  double objective = 0.0;
  double constraint = 0.0;
  int iterations = 0;
  double wall_s = 0.0;
  int refactorizations = 0;       // outer iterations solved by a fresh factorization
  int reanalysis_iterations = 0;  // outer iterations solved by reanalysis
  int switch_iteration = -1;      // first GCMMA iteration, -1 if MMA throughout
  StopReason stop = StopReason::none;
};

// the outer loop; artifacts are written under cfg.output_dir as it goes
RunResult run_optimization(const RunConfig& cfg);

int run_command(const RunConfig& cfg);
int compare_command(const RunConfig& cfg);

// artifact writers, exposed for the tests
void write_history_csv(const std::string& path, const std::vector<IterationRecord>& rows);
std::vector<IterationRecord> read_history_csv(const std::string& path);
void write_density_file(const std::string& path, const GridSpec& grid, const HeavisideParams& hp,
                        const Eigen::VectorXd& H_nodal);
void write_components_file(const std::string& path, const GridSpec& grid,
                           const std::vector<Component>& comps);
void write_summary_file(const std::string& path, const RunConfig& cfg, const RunResult& r);

}  // namespace mmcopt
