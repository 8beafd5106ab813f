#include "mmcopt/mmc.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmcopt {

namespace {

struct LocalFrame {
  double xl, yl;        // point in the component frame
  double a, b;          // thickness quadratic f(x) = a x^2 + b x + t2
  double f;             // half-thickness at xl
};

inline LocalFrame local_frame(const Component& c, double x, double y) {
  const double dx = x - c.x0, dy = y - c.y0;
  const double ct = std::cos(c.theta), st = std::sin(c.theta);
  LocalFrame lf;
  lf.xl = ct * dx + st * dy;
  lf.yl = -st * dx + ct * dy;
  lf.a = (c.t1 + c.t3 - 2.0 * c.t2) / (2.0 * c.half_len * c.half_len);
  lf.b = (c.t3 - c.t1) / (2.0 * c.half_len);
  lf.f = lf.a * lf.xl * lf.xl + lf.b * lf.xl + c.t2;
  return lf;
}

inline double safe_den(double f) {
  // keep the ratio finite when the thickness profile pinches to zero;
  // such points are far outside the band so only the sign matters
  const double tiny = std::numeric_limits<double>::min() * 4.0;
  if (std::abs(f) < tiny) return f < 0.0 ? -tiny : tiny;
  return f;
}

inline void check_component(const Component& c) {
  if (!(c.half_len > 0.0)) throw std::invalid_argument("component: half length must be positive");
}

}  // namespace

double tdf(const Component& c, double x, double y) {
  check_component(c);
  const LocalFrame lf = local_frame(c, x, y);
  const double u = lf.xl / c.half_len;
  const double v = lf.yl / safe_den(lf.f);
  const double p = kTdfExponent;
  return 1.0 - std::pow(u * u, p / 2.0) - std::pow(v * v, p / 2.0);
}

Eigen::Matrix<double, 7, 1> tdf_gradient(const Component& c, double x, double y) {
  check_component(c);
  const LocalFrame lf = local_frame(c, x, y);
  const double L = c.half_len;
  const double ct = std::cos(c.theta), st = std::sin(c.theta);
  const double f = safe_den(lf.f);
  const double u = lf.xl / L;
  const double v = lf.yl / f;
  const double p = kTdfExponent;
  const double pu = p * std::pow(u, p - 1.0);  // p-1 odd keeps the sign of u
  const double pv = p * std::pow(v, p - 1.0);

  // chain through xl, yl and the thickness quadratic; fp = df/dxl
  const double fp = 2.0 * lf.a * lf.xl + lf.b;

  auto d_from = [&](double dxl, double dyl, double df_extra) {
    const double df = fp * dxl + df_extra;
    const double du = dxl / L;
    const double dv = (dyl - v * df) / f;
    return -pu * du - pv * dv;
  };

  Eigen::Matrix<double, 7, 1> g;
  g[0] = d_from(-ct, st, 0.0);                                      // x0
  g[1] = d_from(-st, -ct, 0.0);                                     // y0
  // half length: u = xl/L also shrinks, and both quadratic coefficients scale
  {
    const double df = -(2.0 * lf.a * lf.xl * lf.xl + lf.b * lf.xl) / L;
    const double du = -lf.xl / (L * L);
    const double dv = -v * df / f;
    g[2] = -pu * du - pv * dv;
  }
  const double s = lf.xl / L;  // normalized axial coordinate
  g[3] = d_from(0.0, 0.0, 0.5 * s * s - 0.5 * s);                   // t1
  g[4] = d_from(0.0, 0.0, 1.0 - s * s);                             // t2
  g[5] = d_from(0.0, 0.0, 0.5 * s * s + 0.5 * s);                   // t3
  g[6] = d_from(lf.yl, -lf.xl, 0.0);                                // theta
  return g;
}

double tdf_gradient(const Component& c, double x, double y, int param_index) {
  if (param_index < 0 || param_index >= Component::n_params)
    throw std::invalid_argument("tdf_gradient: parameter index out of range");
  return tdf_gradient(c, x, y)[param_index];
}

StructureTdf structure_tdf(const std::vector<Component>& comps, double x, double y) {
  if (comps.empty()) throw std::invalid_argument("structure_tdf: no components");
  StructureTdf best;
  best.phi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(comps.size()); ++i) {
    const double phi = tdf(comps[i], x, y);
    if (phi > best.phi) {  // strict: ties keep the lowest index
      best.phi = phi;
      best.owner = i;
    }
  }
  return best;
}

double heaviside(double phi, const HeavisideParams& hp) {
  if (!(hp.eps > 0.0)) throw std::invalid_argument("heaviside: band width must be positive");
  if (phi > hp.eps) return 1.0;
  if (phi < -hp.eps) return hp.alpha;
  const double r = phi / hp.eps;
  return 0.75 * (1.0 - hp.alpha) * (r - r * r * r / 3.0) + 0.5 * (1.0 + hp.alpha);
}

double heaviside_derivative(double phi, const HeavisideParams& hp) {
  if (!(hp.eps > 0.0)) throw std::invalid_argument("heaviside: band width must be positive");
  if (std::abs(phi) > hp.eps) return 0.0;
  const double r = phi / hp.eps;
  return 0.75 * (1.0 - hp.alpha) * (1.0 - r * r) / hp.eps;
}

Eigen::VectorXd element_moduli(const Eigen::VectorXd& H_nodal, const GridSpec& grid,
                               const HeavisideParams& hp, double E0) {
  if (H_nodal.size() != grid.n_nodes())
    throw std::invalid_argument("element_moduli: nodal field size mismatch");
  const double q = hp.power_q;
  const double floor_E = E0 * std::pow(hp.alpha, q);
  Eigen::VectorXd Ee(grid.n_elems());
  for (int ex = 0; ex < grid.nelx; ++ex) {
    for (int ey = 0; ey < grid.nely; ++ey) {
      const int e = grid.elem(ex, ey);
      if (!grid.is_active(e)) {
        Ee[e] = floor_E;
        continue;
      }
      double s = 0.0;
      for (int n : grid.elem_nodes(ex, ey)) s += std::pow(H_nodal[n], q);
      Ee[e] = E0 * s / 4.0;
    }
  }
  return Ee;
}

double volume_fraction(const Eigen::VectorXd& H_nodal, const GridSpec& grid) {
  if (H_nodal.size() != grid.n_nodes())
    throw std::invalid_argument("volume_fraction: nodal field size mismatch");
  double vol = 0.0;
  const double area = grid.ew * grid.eh;
  for (int ex = 0; ex < grid.nelx; ++ex) {
    for (int ey = 0; ey < grid.nely; ++ey) {
      const int e = grid.elem(ex, ey);
      if (!grid.is_active(e)) continue;
      double s = 0.0;
      for (int n : grid.elem_nodes(ex, ey)) s += H_nodal[n];
      vol += area * s / 4.0;
    }
  }
  return vol / grid.active_area();
}

FieldSnapshot evaluate_field(const std::vector<Component>& comps, const GridSpec& grid,
                             const HeavisideParams& hp, double E0) {
  FieldSnapshot fs;
  const int nn = grid.n_nodes();
  fs.phi.resize(nn);
  fs.owner.resize(nn);
  fs.H.resize(nn);
  fs.dH.resize(nn);
  for (int ix = 0; ix <= grid.nelx; ++ix) {
    for (int iy = 0; iy <= grid.nely; ++iy) {
      const int n = grid.node(ix, iy);
      const auto st = structure_tdf(comps, ix * grid.ew, iy * grid.eh);
      fs.phi[n] = st.phi;
      fs.owner[n] = st.owner;
      fs.H[n] = heaviside(st.phi, hp);
      fs.dH[n] = heaviside_derivative(st.phi, hp);
    }
  }
  fs.elem_E = element_moduli(fs.H, grid, hp, E0);
  fs.vol_frac = volume_fraction(fs.H, grid);
  return fs;
}

}  // namespace mmcopt
