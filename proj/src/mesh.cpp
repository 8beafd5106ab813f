#include "mmcopt/mesh.hpp"

#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace mmcopt {

GridSpec GridSpec::make(double width, double height, int nelx, int nely) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("grid: non-positive dimensions");
  if (nelx <= 0 || nely <= 0) throw std::invalid_argument("grid: non-positive element counts");
  GridSpec g;
  g.width = width;
  g.height = height;
  g.nelx = nelx;
  g.nely = nely;
  g.ew = width / nelx;
  g.eh = height / nely;
  g.active.assign(static_cast<std::size_t>(nelx) * nely, 1);
  return g;
}

int GridSpec::n_active() const {
  return static_cast<int>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

Mat8 element_stiffness(double E, double nu, double ew, double eh) {
  if (E <= 0) throw std::invalid_argument("element_stiffness: modulus must be positive");
  if (!(nu > -1.0 && nu < 0.5)) throw std::invalid_argument("element_stiffness: poisson ratio out of range");
  if (ew <= 0 || eh <= 0) throw std::invalid_argument("element_stiffness: non-positive element size");

  Eigen::Matrix3d D;
  D << 1.0, nu, 0.0,
       nu, 1.0, 0.0,
       0.0, 0.0, (1.0 - nu) / 2.0;
  D *= E / (1.0 - nu * nu);

  // parent nodes counter-clockwise from (-1,-1); jacobian is constant
  const double xi_n[4] = {-1.0, 1.0, 1.0, -1.0};
  const double eta_n[4] = {-1.0, -1.0, 1.0, 1.0};
  const double jx = ew / 2.0, jy = eh / 2.0;
  const double gp = 1.0 / std::sqrt(3.0);

  Mat8 ke = Mat8::Zero();
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double xi = (a == 0 ? -gp : gp);
      const double eta = (b == 0 ? -gp : gp);
      Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
      for (int i = 0; i < 4; ++i) {
        const double dNdx = xi_n[i] * (1.0 + eta_n[i] * eta) / 4.0 / jx;
        const double dNdy = eta_n[i] * (1.0 + xi_n[i] * xi) / 4.0 / jy;
        B(0, 2 * i) = dNdx;
        B(1, 2 * i + 1) = dNdy;
        B(2, 2 * i) = dNdy;
        B(2, 2 * i + 1) = dNdx;
      }
      ke += B.transpose() * D * B * (jx * jy);  // unit gauss weights
    }
  }
  return ke;
}

GlobalSystem assemble_system(const GridSpec& grid, const Mat8& ke_unit,
                             const Eigen::VectorXd& elem_E,
                             const BoundaryConditions& bc) {
  const int n = grid.n_dofs();
  if (elem_E.size() != grid.n_elems())
    throw std::invalid_argument("assemble_system: modulus count does not match element count");
  if (elem_E.minCoeff() <= 0.0)
    throw std::invalid_argument("assemble_system: non-positive element modulus");

  GlobalSystem sys;
  sys.fixed.assign(n, 0);
  for (int dof : bc.fixed_dofs) {
    if (dof < 0 || dof >= n) throw std::invalid_argument("assemble_system: fixed dof out of range");
    sys.fixed[dof] = 1;
  }

  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(grid.n_elems()) * 64 + bc.fixed_dofs.size() + bc.springs.size());
  for (int ex = 0; ex < grid.nelx; ++ex) {
    for (int ey = 0; ey < grid.nely; ++ey) {
      const double Ee = elem_E[grid.elem(ex, ey)];
      const auto dofs = grid.elem_dofs(ex, ey);
      for (int r = 0; r < 8; ++r) {
        if (sys.fixed[dofs[r]]) continue;
        for (int c = 0; c < 8; ++c) {
          if (sys.fixed[dofs[c]]) continue;
          trips.emplace_back(dofs[r], dofs[c], Ee * ke_unit(r, c));
        }
      }
    }
  }
  for (const auto& [dof, k] : bc.springs) {
    if (dof < 0 || dof >= n) throw std::invalid_argument("assemble_system: spring dof out of range");
    if (k < 0) throw std::invalid_argument("assemble_system: negative spring stiffness");
    if (!sys.fixed[dof]) trips.emplace_back(dof, dof, k);
  }
  for (int dof = 0; dof < n; ++dof) {
    if (sys.fixed[dof]) trips.emplace_back(dof, dof, 1.0);
  }

  sys.K.resize(n, n);
  sys.K.setFromTriplets(trips.begin(), trips.end());
  sys.F = Eigen::VectorXd::Zero(n);
  apply_loads(sys, bc.loads);
  return sys;
}

void apply_loads(GlobalSystem& sys, const std::vector<PointLoad>& loads) {
  for (const auto& ld : loads) {
    if (ld.dof < 0 || ld.dof >= sys.F.size())
      throw std::invalid_argument("apply_loads: dof out of range");
    if (sys.fixed[ld.dof]) {
      std::cerr << "apply_loads: dropping load on fixed dof " << ld.dof << "\n";
      continue;
    }
    sys.F[ld.dof] += ld.value;
  }
}

Prolongation build_prolongation(const GridSpec& fine) {
  if (fine.nelx % 2 != 0 || fine.nely % 2 != 0)
    throw std::invalid_argument("build_prolongation: element counts must be even");

  Prolongation pr;
  pr.coarse = GridSpec::make(fine.width, fine.height, fine.nelx / 2, fine.nely / 2);

  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(fine.n_dofs()) * 4);
  for (int fx = 0; fx <= fine.nelx; ++fx) {
    for (int fy = 0; fy <= fine.nely; ++fy) {
      const int fn = fine.node(fx, fy);
      // coarse cells bracketing this fine node; shared weights per dof direction
      const int cx = fx / 2, cy = fy / 2;
      const bool ox = (fx % 2 != 0), oy = (fy % 2 != 0);
      auto put = [&](int cnx, int cny, double w) {
        const int cn = pr.coarse.node(cnx, cny);
        trips.emplace_back(2 * fn, 2 * cn, w);
        trips.emplace_back(2 * fn + 1, 2 * cn + 1, w);
      };
      if (!ox && !oy) {
        put(cx, cy, 1.0);
      } else if (ox && !oy) {
        put(cx, cy, 0.5);
        put(cx + 1, cy, 0.5);
      } else if (!ox && oy) {
        put(cx, cy, 0.5);
        put(cx, cy + 1, 0.5);
      } else {
        put(cx, cy, 0.25);
        put(cx + 1, cy, 0.25);
        put(cx, cy + 1, 0.25);
        put(cx + 1, cy + 1, 0.25);
      }
    }
  }
  pr.P.resize(fine.n_dofs(), pr.coarse.n_dofs());
  pr.P.setFromTriplets(trips.begin(), trips.end());
  return pr;
}

void DirectSolver::factorize(const SpMat& K) {
  if (!analyzed_) {
    llt_.analyzePattern(K);
    analyzed_ = true;
  }
  llt_.factorize(K);
  if (llt_.info() != Eigen::Success)
    throw std::runtime_error("DirectSolver: cholesky factorization failed (matrix not SPD?)");
}

Eigen::VectorXd DirectSolver::solve(const Eigen::VectorXd& rhs) const {
  if (!analyzed_) throw std::logic_error("DirectSolver: solve before factorize");
  return llt_.solve(rhs);
}

}  // namespace mmcopt
