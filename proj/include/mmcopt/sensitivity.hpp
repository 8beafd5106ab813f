#pragma once

#include <Eigen/Dense>

#include <vector>

#include "mmcopt/mesh.hpp"
#include "mmcopt/mmc.hpp"

namespace mmcopt {

// Design derivative of the stiffness bilinear form V^T K U.  The element
// modulus depends on the design only through the corner-node projections,
// so the derivative gathers, per node, the unit-modulus element energies
// the node touches and chains them through the projection slope and the
// tdf partials of the node's owning component.  Nodes outside the
// projection band contribute exactly zero and are skipped.
Eigen::VectorXd stiffness_bilinear_gradient(const GridSpec& grid,
                                            const std::vector<Component>& comps,
                                            const FieldSnapshot& snap,
                                            const HeavisideParams& hp, const Mat8& ke_unit,
                                            const Eigen::VectorXd& U, const Eigen::VectorXd& V,
                                            double E0);

// Compliance gradient dC/da for C = U^T K U with design-independent loads:
// the self-adjoint case, -U^T (dK/da) U.
Eigen::VectorXd compliance_gradient(const GridSpec& grid, const std::vector<Component>& comps,
                                    const FieldSnapshot& snap, const HeavisideParams& hp,
                                    const Mat8& ke_unit, const Eigen::VectorXd& U, double E0);

// Gradient of a displacement objective through its adjoint pair: with
// lambda solving K lambda = -dC/dU, the chain rule collapses to
// dC/da = lambda^T (dK/da) U.  Springs and loads are design independent
// and drop out.
Eigen::VectorXd adjoint_gradient(const GridSpec& grid, const std::vector<Component>& comps,
                                 const FieldSnapshot& snap, const HeavisideParams& hp,
                                 const Mat8& ke_unit, const Eigen::VectorXd& U,
                                 const Eigen::VectorXd& lambda, double E0);

// Gradient of the volume fraction of the design domain.
Eigen::VectorXd volume_fraction_gradient(const GridSpec& grid,
                                         const std::vector<Component>& comps,
                                         const FieldSnapshot& snap,
                                         const HeavisideParams& hp);

}  // namespace mmcopt
