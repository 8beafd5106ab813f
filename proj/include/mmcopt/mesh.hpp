#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cstdint>
#include <vector>

namespace mmcopt {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec8 = Eigen::Matrix<double, 8, 1>;

// Structured rectangular grid of bilinear quads on [0,width] x [0,height].
// Nodes are numbered column by column (x-index major, y-index minor), with
// two dofs per node interleaved as (ux, uy).  Elements carry an activity
// mask; inactive elements sit outside the design domain but are still
// assembled at the ersatz floor so the grid stays structured.
struct GridSpec {
  double width = 1.0;
  double height = 1.0;
  int nelx = 0;
  int nely = 0;
  double ew = 0.0;  // element width
  double eh = 0.0;  // element height
  std::vector<std::uint8_t> active;

  static GridSpec make(double width, double height, int nelx, int nely);

  int n_nodes() const { return (nelx + 1) * (nely + 1); }
  int n_dofs() const { return 2 * n_nodes(); }
  int n_elems() const { return nelx * nely; }
  int n_active() const;
  double active_area() const { return n_active() * ew * eh; }

  int node(int ix, int iy) const { return ix * (nely + 1) + iy; }
  int elem(int ex, int ey) const { return ex * nely + ey; }
  bool is_active(int elem_id) const { return active[elem_id] != 0; }

  double node_x(int node_id) const { return (node_id / (nely + 1)) * ew; }
  double node_y(int node_id) const { return (node_id % (nely + 1)) * eh; }

  // corner nodes counter-clockwise from the lower-left
  std::array<int, 4> elem_nodes(int ex, int ey) const {
    return {node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1), node(ex, ey + 1)};
  }
  std::array<int, 8> elem_dofs(int ex, int ey) const {
    auto n = elem_nodes(ex, ey);
    return {2 * n[0], 2 * n[0] + 1, 2 * n[1], 2 * n[1] + 1,
            2 * n[2], 2 * n[2] + 1, 2 * n[3], 2 * n[3] + 1};
  }
};

// Plane-stress bilinear quad stiffness, 2x2 Gauss quadrature, unit thickness.
// Exact for rectangular elements (the integrand is biquadratic).
Mat8 element_stiffness(double E, double nu, double ew, double eh);

struct PointLoad {
  int dof = -1;
  double value = 0.0;
};

struct BoundaryConditions {
  std::vector<int> fixed_dofs;
  std::vector<std::pair<int, double>> springs;  // (dof, stiffness) on the diagonal
  std::vector<PointLoad> loads;
};

struct GlobalSystem {
  SpMat K;
  Eigen::VectorXd F;
  std::vector<std::uint8_t> fixed;  // per-dof elimination mask
};

// Assembles K = sum_e E_e * ke_unit with supports eliminated in place:
// fixed rows/columns are zeroed and given a unit diagonal so the matrix
// size never changes and the system stays symmetric positive definite.
// elem_E must supply one modulus per element (inactive ones included).
GlobalSystem assemble_system(const GridSpec& grid, const Mat8& ke_unit,
                             const Eigen::VectorXd& elem_E,
                             const BoundaryConditions& bc);

// Adds point loads to an assembled system.  Loads on fixed dofs are
// zeroed with a warning on stderr rather than silently kept.
void apply_loads(GlobalSystem& sys, const std::vector<PointLoad>& loads);

struct Prolongation {
  SpMat P;  // fine dofs x coarse dofs, entries in {1, 0.5, 0.25}
  GridSpec coarse;
};

// Bilinear interpolation from the 2:1-coarsened grid.  Requires even
// element counts in both directions; built once per grid and never
// rebuilt during optimization.
Prolongation build_prolongation(const GridSpec& fine);

// Sparse Cholesky with a reusable symbolic analysis (the sparsity
// pattern is fixed by the mesh, only the values change per design).
class DirectSolver {
 public:
  void factorize(const SpMat& K);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  bool ready() const { return analyzed_; }

 private:
  Eigen::SimplicialLLT<SpMat> llt_;
  bool analyzed_ = false;
};

}  // namespace mmcopt
