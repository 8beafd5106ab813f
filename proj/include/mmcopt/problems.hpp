#pragma once

#include <string>
#include <vector>

#include "mmcopt/mesh.hpp"
#include "mmcopt/mmc.hpp"
#include "mmcopt/optimizer.hpp"

namespace mmcopt {

enum class ProblemKind { cantilever, lshape, mechanism };

// A ready-to-run benchmark: grid with activity mask, supports, loads and
// springs, material data, volume budget and the solver/optimizer knobs
// that work well for it.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::cantilever;
  std::string name;
  GridSpec grid;
  BoundaryConditions bc;
  double E0 = 1.0;
  double nu = 0.3;
  double vbar = 0.4;        // volume-fraction budget
  double eta = 0.11;        // coarse refactorization threshold
  double delta_switch = 0.002;
  double t_min = 0.0;       // thinnest allowed half-thickness
  HeavisideParams hside;
  bool self_adjoint = true; // compliance objective
  int out_dof = -1;         // observed dof for the mechanism objective
};

// name: cantilever | lshape | mechanism.  Element counts must be even;
// the lshape additionally needs a square grid whose corner cutout lands
// on element boundaries.
ProblemSpec build_problem(const std::string& name, int nelx, int nely);

// Crossed-diagonal starting layout on a regular grid of cells (4x2 for the
// rectangular domains, 4x4 minus the cutout cells for the lshape).
// seed > 0 adds a small deterministic jitter to the component parameters.
std::vector<Component> initial_layout(const ProblemSpec& prob, unsigned seed = 0);

Eigen::VectorXd pack_components(const std::vector<Component>& comps);
std::vector<Component> unpack_components(const Eigen::VectorXd& x);

// Design variables are optimized in normalized units: positions by the
// domain size, lengths by the width, thicknesses by the height, the angle
// by pi.  scale maps normalized -> physical, elementwise.
struct VarScaling {
  Eigen::VectorXd scale;

  Eigen::VectorXd to_physical(const Eigen::VectorXd& xn) const {
    return scale.cwiseProduct(xn);
  }
  Eigen::VectorXd to_normalized(const Eigen::VectorXd& xp) const {
    return xp.cwiseQuotient(scale);
  }
};

VarScaling make_scaling(const ProblemSpec& prob, int n_components);

// Box bounds in normalized units.
Bounds design_bounds(const ProblemSpec& prob, int n_components);

}  // namespace mmcopt
