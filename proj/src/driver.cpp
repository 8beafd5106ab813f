#include "mmcopt/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "mmcopt/ira.hpp"
#include "mmcopt/sensitivity.hpp"

namespace mmcopt {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
  }
  if (used != value.size())
    throw std::invalid_argument("config: trailing characters in " + key + ": '" + value + "'");
  return v;
}

int parse_int(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw std::invalid_argument("config: " + key + " must be an integer");
  return i;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// wall time with file I/O carved out
class Stopwatch {
 public:
  void resume() {
    if (!running_) {
      t0_ = Clock::now();
      running_ = true;
    }
  }
  void pause() {
    if (running_) {
      total_ += std::chrono::duration<double>(Clock::now() - t0_).count();
      running_ = false;
    }
  }
  double seconds() const {
    double t = total_;
    if (running_) t += std::chrono::duration<double>(Clock::now() - t0_).count();
    return t;
  }

 private:
  using Clock = std::chrono::steady_clock;
  Clock::time_point t0_;
  double total_ = 0.0;
  bool running_ = false;
};

std::string snapshot_path(const std::filesystem::path& dir, const char* stem, int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d.txt", stem, iter);
  return (dir / buf).string();
}

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::design_tolerance: return "design-tolerance";
    case StopReason::max_iterations: return "iteration-budget";
    default: return "none";
  }
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "problem") {
    cfg.problem = value;
  } else if (key == "nelx") {
    cfg.nelx = parse_int(key, value);
  } else if (key == "nely") {
    cfg.nely = parse_int(key, value);
  } else if (key == "solver") {
    if (value != "full" && value != "ira")
      throw std::invalid_argument("config: solver must be 'full' or 'ira', got '" + value + "'");
    cfg.solver = value;
  } else if (key == "eta") {
    cfg.eta = parse_double(key, value);
    if (cfg.eta <= 0.0) throw std::invalid_argument("config: eta must be positive");
  } else if (key == "eps_star") {
    cfg.eps_star = parse_double(key, value);
    if (cfg.eps_star <= 0.0) throw std::invalid_argument("config: eps_star must be positive");
  } else if (key == "delta") {
    cfg.delta = parse_double(key, value);
    if (cfg.delta <= 0.0) throw std::invalid_argument("config: delta must be positive");
  } else if (key == "tol_x") {
    cfg.tol_x = parse_double(key, value);
    if (cfg.tol_x <= 0.0) throw std::invalid_argument("config: tol_x must be positive");
  } else if (key == "max_iter") {
    cfg.max_iter = parse_int(key, value);
    if (cfg.max_iter < 1) throw std::invalid_argument("config: max_iter must be at least 1");
  } else if (key == "seed") {
    const int s = parse_int(key, value);
    if (s < 0) throw std::invalid_argument("config: seed must be non-negative");
    cfg.seed = static_cast<unsigned>(s);
  } else if (key == "output_dir") {
    cfg.output_dir = value;
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value: '" + line + "'");
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void write_history_csv(const std::string& path, const std::vector<IterationRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "iteration,objective,constraint,max_dx,opt_mode,solver_mode,n_d,v_cycles,wall_s\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << g17(r.objective) << ',' << g17(r.constraint) << ','
        << g17(r.max_dx) << ',' << r.opt_mode << ',' << r.solver_mode << ',' << r.n_d << ','
        << r.v_cycles << ',' << g17(r.wall_s) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<IterationRecord> read_history_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty history: " + path);
  if (trim(line) != "iteration,objective,constraint,max_dx,opt_mode,solver_mode,n_d,v_cycles,wall_s")
    throw std::runtime_error("unexpected history header in " + path);
  std::vector<IterationRecord> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw std::runtime_error("bad history row: '" + line + "'");
    IterationRecord r;
    r.iteration = parse_int("iteration", f[0]);
    r.objective = parse_double("objective", f[1]);
    r.constraint = parse_double("constraint", f[2]);
    r.max_dx = parse_double("max_dx", f[3]);
    r.opt_mode = f[4];
    r.solver_mode = f[5];
    r.n_d = parse_int("n_d", f[6]);
    r.v_cycles = parse_int("v_cycles", f[7]);
    r.wall_s = parse_double("wall_s", f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_density_file(const std::string& path, const GridSpec& grid, const HeavisideParams& hp,
                        const Eigen::VectorXd& H_nodal) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (int ey = grid.nely - 1; ey >= 0; --ey) {
    for (int ex = 0; ex < grid.nelx; ++ex) {
      double rho = hp.alpha;
      if (grid.is_active(grid.elem(ex, ey))) {
        const auto nodes = grid.elem_nodes(ex, ey);
        rho = 0.25 * (H_nodal[nodes[0]] + H_nodal[nodes[1]] + H_nodal[nodes[2]] +
                      H_nodal[nodes[3]]);
      }
      out << (ex ? " " : "") << g17(rho);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_components_file(const std::string& path, const GridSpec& grid,
                           const std::vector<Component>& comps) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << comps.size() << ' ' << g17(grid.width) << ' ' << g17(grid.height) << ' ' << grid.nelx
      << ' ' << grid.nely << '\n';
  for (const auto& c : comps) {
    out << g17(c.x0) << ' ' << g17(c.y0) << ' ' << g17(c.half_len) << ' ' << g17(c.t1) << ' '
        << g17(c.t2) << ' ' << g17(c.t3) << ' ' << g17(c.theta) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_summary_file(const std::string& path, const RunConfig& cfg, const RunResult& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "problem: " << cfg.problem << '\n'
      << "grid: " << cfg.nelx << 'x' << cfg.nely << '\n'
      << "solver: " << cfg.solver << '\n'
      << "iterations: " << r.iterations << '\n'
      << "objective: " << g17(r.objective) << '\n'
      << "constraint: " << g17(r.constraint) << '\n'
      << "wall_s: " << g17(r.wall_s) << '\n'
      << "refactorizations: " << r.refactorizations << '\n'
      << "reanalysis_iterations: " << r.reanalysis_iterations << '\n'
      << "switch_iteration: " << r.switch_iteration << '\n'
      << "stop_reason: " << stop_reason_name(r.stop) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

RunResult run_optimization(const RunConfig& cfg) {
  ProblemSpec prob = build_problem(cfg.problem, cfg.nelx, cfg.nely);
  if (cfg.eta > 0.0) prob.eta = cfg.eta;
  if (cfg.delta > 0.0) prob.delta_switch = cfg.delta;
  if (cfg.solver != "full" && cfg.solver != "ira")
    throw std::invalid_argument("solver must be 'full' or 'ira'");
  const bool use_ira = cfg.solver == "ira";

  const GridSpec& grid = prob.grid;
  std::vector<Component> comps = initial_layout(prob, cfg.seed);
  const int nc = static_cast<int>(comps.size());
  const VarScaling scaling = make_scaling(prob, nc);
  const Bounds bounds = design_bounds(prob, nc);
  Eigen::VectorXd x = scaling.to_normalized(pack_components(comps));
  x = x.cwiseMax(bounds.lower).cwiseMin(bounds.upper);

  const Mat8 ke_unit = element_stiffness(1.0, prob.nu, grid.ew, grid.eh);
  DirectSolver direct;
  std::unique_ptr<IraSolver> ira;
  if (use_ira) {
    IraConfig ic;
    ic.eta = prob.eta;
    ic.eps_star = cfg.eps_star;
    ira = std::make_unique<IraSolver>(grid, ic);
  }

  const int n_dofs = grid.n_dofs();
  Eigen::VectorXd U_prev = Eigen::VectorXd::Zero(n_dofs);
  Eigen::VectorXd lam_prev = Eigen::VectorXd::Zero(n_dofs);

  MmaState mma;
  GcmmaState gcmma;
  SwitchMonitor monitor(prob.delta_switch);
  bool use_gcmma = false;

  const std::filesystem::path out_dir(cfg.output_dir);
  std::filesystem::create_directories(out_dir);

  RunResult res;
  Stopwatch watch;
  watch.resume();

  int cur_iter = 0;
  int tol_hits = 0;
  const SpMat* K_cur = nullptr;
  bool direct_valid = false;

  auto prepare = [&](const SpMat& K) {
    K_cur = &K;
    if (use_ira) {
      ira->set_matrix(K, cur_iter);
      direct_valid = false;
    } else {
      direct.factorize(K);
      direct_valid = true;
    }
  };

  auto solve_prepared = [&](const Eigen::VectorXd& F, const Eigen::VectorXd& warm, SolverMode& m,
                            int& nd, int& vc) -> Eigen::VectorXd {
    if (!use_ira) {
      m = SolverMode::full_factorization;
      nd = 0;
      vc = 0;
      return direct.solve(F);
    }
    SolveReport rep;
    Eigen::VectorXd U = ira->solve(F, warm, rep);
    m = rep.mode;
    nd = rep.n_d;
    vc = rep.v_cycles;
    if (rep.converged && !rep.breakdown) return U;
    std::cerr << "iteration " << cur_iter
              << ": two-grid solve stalled, falling back to a direct factorization\n";
    ira->invalidate();
    if (!direct_valid) {
      direct.factorize(*K_cur);
      direct_valid = true;
    }
    m = SolverMode::full_factorization;
    return direct.solve(F);
  };

  // trial evaluations for the conservative inner loop re-solve through the
  // same solver path as the main iteration
  Evaluator evaluate = [&](const Eigen::VectorXd& xn) -> std::pair<double, double> {
    const auto cs = unpack_components(scaling.to_physical(xn));
    const FieldSnapshot s = evaluate_field(cs, grid, prob.hside, prob.E0);
    const GlobalSystem sys = assemble_system(grid, ke_unit, s.elem_E, prob.bc);
    prepare(sys.K);
    SolverMode m;
    int nd, vc;
    const Eigen::VectorXd U = solve_prepared(sys.F, U_prev, m, nd, vc);
    const double f0 = prob.self_adjoint ? sys.F.dot(U) : -U[prob.out_dof];
    return {f0, s.vol_frac - prob.vbar};
  };

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    cur_iter = iter;
    comps = unpack_components(scaling.to_physical(x));
    const FieldSnapshot snap = evaluate_field(comps, grid, prob.hside, prob.E0);
    const GlobalSystem sys = assemble_system(grid, ke_unit, snap.elem_E, prob.bc);
    prepare(sys.K);

    SolverMode mode;
    int n_d, v_cycles;
    const Eigen::VectorXd U = solve_prepared(sys.F, U_prev, mode, n_d, v_cycles);
    U_prev = U;

    // output-displacement runs score C = -u_out: pushing the output point
    // along the input direction is rewarded, so any connected transmission
    // path beats the all-void design and the optimizer cannot park at zero
    const double C = prob.self_adjoint ? sys.F.dot(U) : -U[prob.out_dof];
    const double g = snap.vol_frac - prob.vbar;

    Eigen::VectorXd dC_phys;
    if (prob.self_adjoint) {
      dC_phys = compliance_gradient(grid, comps, snap, prob.hside, ke_unit, U, prob.E0);
    } else {
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_dofs);
      rhs[prob.out_dof] = 1.0;
      SolverMode lm;
      int lnd, lvc;
      const Eigen::VectorXd lam = solve_prepared(rhs, lam_prev, lm, lnd, lvc);
      lam_prev = lam;
      dC_phys = adjoint_gradient(grid, comps, snap, prob.hside, ke_unit, U, lam, prob.E0);
    }
    const Eigen::VectorXd dV_phys = volume_fraction_gradient(grid, comps, snap, prob.hside);
    const Eigen::VectorXd dC = dC_phys.cwiseProduct(scaling.scale);
    const Eigen::VectorXd dV = dV_phys.cwiseProduct(scaling.scale);

    if (use_ira) {
      if (mode == SolverMode::reanalysis)
        ++res.reanalysis_iterations;
      else
        ++res.refactorizations;
    } else {
      ++res.refactorizations;
    }

    if (!use_gcmma && monitor.push(C)) {
      use_gcmma = true;
      res.switch_iteration = iter;
    }

    const Eigen::VectorXd x_new = use_gcmma
                                      ? gcmma_step(x, C, dC, g, dV, bounds, gcmma, evaluate)
                                      : mma_step(x, C, dC, g, dV, bounds, mma);

    IterationRecord row;
    row.iteration = iter;
    row.objective = C;
    row.constraint = g;
    row.max_dx = (x_new - x).lpNorm<Eigen::Infinity>();
    row.opt_mode = use_gcmma ? "gcmma" : "mma";
    row.solver_mode = to_string(mode);
    row.n_d = n_d;
    row.v_cycles = v_cycles;
    row.wall_s = watch.seconds();
    res.history.push_back(row);

    // a single sub-tolerance step can be an artifact of one overly
    // conservative inner loop; require it twice in a row before stopping,
    // and never count stationarity as convergence while the volume budget
    // is still violated
    StopReason sr = check_stop(x_new, x, cfg.tol_x, iter, cfg.max_iter);
    if (sr == StopReason::design_tolerance) {
      if (g > 1e-3) {
        sr = StopReason::none;
        tol_hits = 0;
      } else {
        ++tol_hits;
        if (tol_hits < 2 && iter < cfg.max_iter) sr = StopReason::none;
      }
    } else {
      tol_hits = 0;
    }

    if (iter == 1 || iter % 10 == 0 || sr != StopReason::none) {
      watch.pause();
      write_density_file(snapshot_path(out_dir, "density", iter), grid, prob.hside, snap.H);
      write_components_file(snapshot_path(out_dir, "components", iter), grid, comps);
      watch.resume();
    }

    if (sr != StopReason::none) {
      res.stop = sr;
      res.iterations = iter;
      res.objective = C;
      res.constraint = g;
      res.final_components = comps;  // the design the final row was evaluated at
      break;
    }
    x = x_new;
  }

  watch.pause();
  res.wall_s = watch.seconds();

  write_history_csv((out_dir / "history.csv").string(), res.history);
  {
    RunConfig annotated = cfg;
    annotated.eta = prob.eta;
    annotated.delta = prob.delta_switch;
    write_summary_file((out_dir / "summary.txt").string(), annotated, res);
  }
  return res;
}

int run_command(const RunConfig& cfg) {
  try {
    const RunResult r = run_optimization(cfg);
    return r.stop == StopReason::none ? 1 : 0;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return 1;
  }
}

namespace {

std::string pct4(double ira, double full) {
  char buf[64];
  if (full == 0.0) return "n/a";
  std::snprintf(buf, sizeof buf, "%.4g%%", (ira - full) / full * 100.0);
  return buf;
}

}  // namespace

int compare_command(const RunConfig& cfg) {
  const std::filesystem::path out_dir(cfg.output_dir);
  try {
    std::filesystem::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "compare failed: " << e.what() << '\n';
    return 1;
  }

  RunConfig cfull = cfg;
  cfull.solver = "full";
  cfull.output_dir = (out_dir / "full").string();
  RunConfig cira = cfg;
  cira.solver = "ira";
  cira.output_dir = (out_dir / "ira").string();

  bool ok = true;
  RunResult rfull, rira;
  try {
    rfull = run_optimization(cfull);
  } catch (const std::exception& e) {
    std::cerr << "full-analysis leg failed: " << e.what() << '\n';
    ok = false;
  }
  try {
    rira = run_optimization(cira);
  } catch (const std::exception& e) {
    std::cerr << "reanalysis leg failed: " << e.what() << '\n';
    ok = false;
  }

  try {
    std::ofstream out(out_dir / "comparison.txt");
    if (!out) throw std::runtime_error("cannot open comparison.txt");
    out << "problem: " << cfg.problem << '\n'
        << "grid: " << cfg.nelx << 'x' << cfg.nely << '\n';
    if (!ok) {
      out << "status: incomplete\n";
      if (!out) throw std::runtime_error("failed writing comparison.txt");
      return 1;
    }
    out << "status: complete\n"
        << "objective_full: " << g17(rfull.objective) << '\n'
        << "objective_ira: " << g17(rira.objective) << '\n'
        << "objective_diff: " << pct4(rira.objective, rfull.objective) << '\n'
        << "iterations_full: " << rfull.iterations << '\n'
        << "iterations_ira: " << rira.iterations << '\n'
        << "iterations_diff: " << pct4(rira.iterations, rfull.iterations) << '\n'
        << "time_full_s: " << g17(rfull.wall_s) << '\n'
        << "time_ira_s: " << g17(rira.wall_s) << '\n'
        << "time_diff: " << pct4(rira.wall_s, rfull.wall_s) << '\n';
    if (!out) throw std::runtime_error("failed writing comparison.txt");
  } catch (const std::exception& e) {
    std::cerr << "compare failed: " << e.what() << '\n';
    return 1;
  }
  return ok ? 0 : 1;
}

}  // namespace mmcopt
