#include "mmcopt/sensitivity.hpp"

#include <cmath>
#include <stdexcept>

namespace mmcopt {

namespace {

// per-node sum of a bilinear element quantity over the active elements
// containing the node
Eigen::VectorXd nodal_element_weights(const GridSpec& grid, const Mat8& ke_unit,
                                      const Eigen::VectorXd& U, const Eigen::VectorXd& V) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(grid.n_nodes());
  Vec8 ue, ve;
  for (int ex = 0; ex < grid.nelx; ++ex) {
    for (int ey = 0; ey < grid.nely; ++ey) {
      if (!grid.is_active(grid.elem(ex, ey))) continue;
      const auto dofs = grid.elem_dofs(ex, ey);
      for (int i = 0; i < 8; ++i) {
        ue[i] = U[dofs[i]];
        ve[i] = V[dofs[i]];
      }
      const double q_e = ve.dot(ke_unit * ue);
      for (int n : grid.elem_nodes(ex, ey)) w[n] += q_e;
    }
  }
  return w;
}

// scatter: grad[7*owner + p] += base * dphi_p at every in-band node
void scatter_band_nodes(const GridSpec& grid, const std::vector<Component>& comps,
                        const FieldSnapshot& snap, const Eigen::VectorXd& node_factor,
                        Eigen::VectorXd& grad) {
  for (int ix = 0; ix <= grid.nelx; ++ix) {
    for (int iy = 0; iy <= grid.nely; ++iy) {
      const int n = grid.node(ix, iy);
      const double base = node_factor[n];
      if (base == 0.0) continue;
      const int c = snap.owner[n];
      const auto dphi = tdf_gradient(comps[c], ix * grid.ew, iy * grid.eh);
      grad.segment<7>(7 * c) += base * dphi;
    }
  }
}

void check_sizes(const GridSpec& grid, const std::vector<Component>& comps,
                 const FieldSnapshot& snap) {
  if (comps.empty()) throw std::invalid_argument("sensitivity: no components");
  if (snap.H.size() != grid.n_nodes() || snap.owner.size() != grid.n_nodes())
    throw std::invalid_argument("sensitivity: snapshot does not match grid");
}

}  // namespace

Eigen::VectorXd stiffness_bilinear_gradient(const GridSpec& grid,
                                            const std::vector<Component>& comps,
                                            const FieldSnapshot& snap,
                                            const HeavisideParams& hp, const Mat8& ke_unit,
                                            const Eigen::VectorXd& U, const Eigen::VectorXd& V,
                                            double E0) {
  check_sizes(grid, comps, snap);
  if (U.size() != grid.n_dofs() || V.size() != grid.n_dofs())
    throw std::invalid_argument("sensitivity: displacement size mismatch");

  const Eigen::VectorXd w = nodal_element_weights(grid, ke_unit, U, V);
  const double q = hp.power_q;
  Eigen::VectorXd node_factor(grid.n_nodes());
  for (int n = 0; n < grid.n_nodes(); ++n) {
    const double dh = snap.dH[n];
    node_factor[n] =
        dh == 0.0 ? 0.0 : (E0 * q / 4.0) * std::pow(snap.H[n], q - 1.0) * dh * w[n];
  }

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(7 * static_cast<int>(comps.size()));
  scatter_band_nodes(grid, comps, snap, node_factor, grad);
  return grad;
}

Eigen::VectorXd compliance_gradient(const GridSpec& grid, const std::vector<Component>& comps,
                                    const FieldSnapshot& snap, const HeavisideParams& hp,
                                    const Mat8& ke_unit, const Eigen::VectorXd& U, double E0) {
  return -stiffness_bilinear_gradient(grid, comps, snap, hp, ke_unit, U, U, E0);
}

Eigen::VectorXd adjoint_gradient(const GridSpec& grid, const std::vector<Component>& comps,
                                 const FieldSnapshot& snap, const HeavisideParams& hp,
                                 const Mat8& ke_unit, const Eigen::VectorXd& U,
                                 const Eigen::VectorXd& lambda, double E0) {
  return stiffness_bilinear_gradient(grid, comps, snap, hp, ke_unit, U, lambda, E0);
}

Eigen::VectorXd volume_fraction_gradient(const GridSpec& grid,
                                         const std::vector<Component>& comps,
                                         const FieldSnapshot& snap,
                                         const HeavisideParams& hp) {
  check_sizes(grid, comps, snap);
  (void)hp;

  // number of active elements sharing each node
  Eigen::VectorXd cnt = Eigen::VectorXd::Zero(grid.n_nodes());
  for (int ex = 0; ex < grid.nelx; ++ex) {
    for (int ey = 0; ey < grid.nely; ++ey) {
      if (!grid.is_active(grid.elem(ex, ey))) continue;
      for (int n : grid.elem_nodes(ex, ey)) cnt[n] += 1.0;
    }
  }

  const double area = grid.ew * grid.eh;
  const double scale = area / (4.0 * grid.active_area());
  Eigen::VectorXd node_factor(grid.n_nodes());
  for (int n = 0; n < grid.n_nodes(); ++n) {
    const double dh = snap.dH[n];
    node_factor[n] = dh == 0.0 ? 0.0 : scale * dh * cnt[n];
  }

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(7 * static_cast<int>(comps.size()));
  scatter_band_nodes(grid, comps, snap, node_factor, grad);
  return grad;
}

}  // namespace mmcopt
