#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mmcopt/mesh.hpp"

namespace mmcopt {

// Forward Gauss-Seidel sweeps in ascending dof order.  K must be symmetric
// (column access doubles as row access).  Returns the number of sweeps run.
int gauss_seidel(const SpMat& K, Eigen::VectorXd& U, const Eigen::VectorXd& F, int sweeps);

// Coarse-grid right-hand side: d = P^T (F - K U).
Eigen::VectorXd restrict_residual(const SpMat& P, const SpMat& K,
                                  const Eigen::VectorXd& U, const Eigen::VectorXd& F);

// Cholesky factorization of a coarse operator kept alive across design
// iterations, together with the solution pair it was anchored to.
class ReferenceFactorization {
 public:
  SpMat K_ref;
  double max_abs = 0.0;        // largest |entry| of K_ref, scales the detection tolerance
  Eigen::VectorXd dx_ref;      // reference coarse solution
  Eigen::VectorXd d_ref;       // right-hand side dx_ref was solved against
  int iteration_tag = -1;

  void reset(const SpMat& K, int tag);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  bool ready() const { return llt_ != nullptr; }

  // P^T (L L^T) P reassembled from the stored factor, for fidelity checks
  SpMat reconstruct() const;

 private:
  std::unique_ptr<Eigen::SimplicialLLT<SpMat>> llt_;
};

// Per-row accumulated absolute change between a matrix and the reference.
Eigen::VectorXd modification_rowsums(const SpMat& K_i, const SpMat& K_ref);

// Dofs whose row of the matrix or whose residual entry moved beyond the
// detection tolerance 1e-12 * max|K_ref|; ascending order.
std::vector<int> detect_modifications(const SpMat& K_i, const ReferenceFactorization& ref,
                                      const Eigen::VectorXd& delta);

// Fundamental solutions of the constrained reference system.  Columns of R
// pose a unit constraint at one modified dof with the load that removing
// that dof's coupling induces; B answers them reusing the reference factor
// only, so no new factorization of the modified matrix is ever formed.
struct ReanalysisWorkspace {
  std::vector<int> mods;
  Eigen::MatrixXd R;     // constrained right-hand sides (one column per modified dof)
  Eigen::MatrixXd B;     // fundamental solutions: K_c B = R
  Eigen::MatrixXd K_B;   // modified rows of K_i condensed onto B
  Eigen::PartialPivLU<Eigen::MatrixXd> K_B_lu;
  Eigen::VectorXd delta; // last unbalanced residual passed in
  Eigen::VectorXd y;     // last combination coefficients
  bool ok = false;
};

ReanalysisWorkspace build_reanalysis(const ReferenceFactorization& ref, const SpMat& K_i,
                                     const std::vector<int>& mods);

// Correction ddx with K_i * ddx = delta, valid when delta vanishes outside
// the modification set.  Sets ws.ok = false instead of returning garbage
// when the condensed system is singular (fully detached modifications).
Eigen::VectorXd reanalysis_correction(ReanalysisWorkspace& ws, const Eigen::VectorXd& delta);

// Solution of K_i dx = d_i anchored at the reference pair: exact whenever
// mods covers every unbalanced dof, no matter how large the modification.
Eigen::VectorXd exact_reanalysis(const ReferenceFactorization& ref, const SpMat& K_i,
                                 const Eigen::VectorXd& d_i, const std::vector<int>& mods);

struct TwoGridHierarchy {
  SpMat P;   // prolongation
  SpMat Pt;  // cached transpose
  int sweeps = 2;
};

using CoarseSolve = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// One two-grid cycle: pre-smooth, restricted-residual coarse correction,
// prolongated update, post-smooth.
void v_cycle(const TwoGridHierarchy& hg, const SpMat& K, const Eigen::VectorXd& F,
             Eigen::VectorXd& U, const CoarseSolve& coarse);

enum class SolverMode { full_factorization, reanalysis };
std::string to_string(SolverMode m);

struct IraConfig {
  double eta = 0.11;       // refactorize when n_d/n_c exceeds this
  double eps_star = 1e-2;  // stop cycling when the energy sequence stalls
  int sweeps = 2;
  int max_cycles = 50;
};

struct SolveReport {
  bool converged = false;
  bool breakdown = false;  // condensed reanalysis system went singular
  SolverMode mode = SolverMode::full_factorization;
  int n_d = 0;
  int n_c = 0;
  int v_cycles = 0;
  double slack = 0.0;         // last relative energy change between cycles
  double rel_residual = 0.0;  // ||F - K U|| / ||F|| at exit
};

// Two-grid solver whose coarse level is solved exactly by reanalysis of a
// retained Cholesky factorization.  Per design iteration: set_matrix builds
// the Galerkin coarse operator, measures how far it drifted from the
// reference and either refreshes the factorization (drift above eta) or
// assembles the reanalysis workspace that makes every subsequent coarse
// solve exact while reusing the old factor.
class IraSolver {
 public:
  IraSolver(const GridSpec& fine, const IraConfig& cfg);

  void set_matrix(const SpMat& K, int outer_iteration);
  Eigen::VectorXd solve(const Eigen::VectorXd& F, const Eigen::VectorXd& U0, SolveReport& rep);

  void invalidate() { force_refactor_ = true; }
  SolverMode current_mode() const { return mode_; }
  int current_n_d() const { return n_d_; }
  int n_coarse() const { return n_c_; }
  int refactorizations() const { return refactor_count_; }
  int reanalysis_iterations() const { return reanalysis_count_; }
  const ReferenceFactorization& reference() const { return ref_; }
  const SpMat& coarse_matrix() const { return Kc_; }
  const TwoGridHierarchy& hierarchy() const { return hg_; }

 private:
  IraConfig cfg_;
  TwoGridHierarchy hg_;
  int n_c_ = 0;
  const SpMat* K_ = nullptr;
  SpMat Kc_;
  ReferenceFactorization ref_;
  ReanalysisWorkspace ws_;
  SolverMode mode_ = SolverMode::full_factorization;
  int n_d_ = 0;
  bool force_refactor_ = true;
  bool ref_pair_pending_ = false;
  int refactor_count_ = 0;
  int reanalysis_count_ = 0;
};

}  // namespace mmcopt
