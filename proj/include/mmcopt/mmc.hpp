#pragma once

#include <Eigen/Dense>

#include <vector>

#include "mmcopt/mesh.hpp"

namespace mmcopt {

// One morphable component: a hyperelliptic bar with quadratically varying
// half-thickness, described by seven scalars.  theta is measured from the
// +x axis, half_len along the component axis, t1/t2/t3 are half-thicknesses
// at the left end, the middle and the right end.
struct Component {
  double x0 = 0.0;
  double y0 = 0.0;
  double half_len = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
  double theta = 0.0;

  static constexpr int n_params = 7;

  Eigen::Matrix<double, 7, 1> as_vector() const {
    Eigen::Matrix<double, 7, 1> v;
    v << x0, y0, half_len, t1, t2, t3, theta;
    return v;
  }
  static Component from_vector(const Eigen::Matrix<double, 7, 1>& v) {
    return Component{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  }
};

// exponent of the hyperelliptic level-set profile
inline constexpr double kTdfExponent = 6.0;

// Topology description function of a single component: positive inside,
// zero on the boundary, negative outside.
double tdf(const Component& c, double x, double y);

// All seven partials of the tdf at a point, in component-parameter order.
Eigen::Matrix<double, 7, 1> tdf_gradient(const Component& c, double x, double y);
double tdf_gradient(const Component& c, double x, double y, int param_index);

struct StructureTdf {
  double phi = 0.0;
  int owner = -1;  // argmax component, lowest index on ties
};

// Pointwise max over all components, tracking which component attains it.
StructureTdf structure_tdf(const std::vector<Component>& comps, double x, double y);

// Regularized Heaviside projection: alpha far outside, 1 far inside,
// a C1 cubic blend across a band of half-width eps around the boundary.
struct HeavisideParams {
  double eps = 0.0;
  double alpha = 1e-3;
  double power_q = 2.0;  // exponent used by the modulus interpolation
};

double heaviside(double phi, const HeavisideParams& hp);
double heaviside_derivative(double phi, const HeavisideParams& hp);

// Ersatz modulus per element from the four corner-node projections:
// E_e = E0 * mean(H_i^q).  Elements outside the design domain are pinned
// to the void floor E0 * alpha^q regardless of the field.
Eigen::VectorXd element_moduli(const Eigen::VectorXd& H_nodal, const GridSpec& grid,
                               const HeavisideParams& hp, double E0);

// Material fraction of the design domain: mean of nodal H over the active
// elements' corners, weighted by element area.
double volume_fraction(const Eigen::VectorXd& H_nodal, const GridSpec& grid);

// Everything the analysis and the sensitivities need about the current
// design, evaluated on the grid nodes in one pass.
struct FieldSnapshot {
  Eigen::VectorXd phi;    // nodal structure tdf
  Eigen::VectorXi owner;  // argmax component per node
  Eigen::VectorXd H;      // nodal projection
  Eigen::VectorXd dH;     // nodal projection slope dH/dphi
  Eigen::VectorXd elem_E;
  double vol_frac = 0.0;
};

FieldSnapshot evaluate_field(const std::vector<Component>& comps, const GridSpec& grid,
                             const HeavisideParams& hp, double E0);

}  // namespace mmcopt
