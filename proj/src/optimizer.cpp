#include "mmcopt/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace mmcopt {

namespace {

constexpr double kRangeFloor = 1e-5;

Eigen::VectorXd ranges(const Bounds& b) {
  return (b.upper - b.lower).cwiseMax(kRangeFloor);
}

void update_asymptotes(const Eigen::VectorXd& x, const Bounds& bounds, MmaState& st) {
  const Eigen::VectorXd xr = ranges(bounds);
  if (st.iter < 2) {
    st.low = x - st.opt.asy_init * xr;
    st.upp = x + st.opt.asy_init * xr;
    return;
  }
  Eigen::VectorXd low_new(x.size()), upp_new(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double z = (x[j] - st.xold1[j]) * (st.xold1[j] - st.xold2[j]);
    double fac = 1.0;
    if (z > 0.0) fac = st.opt.asy_incr;
    else if (z < 0.0) fac = st.opt.asy_decr;
    low_new[j] = x[j] - fac * (st.xold1[j] - st.low[j]);
    upp_new[j] = x[j] + fac * (st.upp[j] - st.xold1[j]);
    low_new[j] = std::max(low_new[j], x[j] - 10.0 * xr[j]);
    low_new[j] = std::min(low_new[j], x[j] - 0.01 * xr[j]);
    upp_new[j] = std::min(upp_new[j], x[j] + 10.0 * xr[j]);
    upp_new[j] = std::max(upp_new[j], x[j] + 0.01 * xr[j]);
  }
  st.low = low_new;
  st.upp = upp_new;
}

void move_box(const Eigen::VectorXd& x, const Bounds& bounds, const MmaState& st,
              Eigen::VectorXd& alpha, Eigen::VectorXd& beta) {
  const Eigen::VectorXd xr = ranges(bounds);
  alpha = bounds.lower.cwiseMax(st.low + st.opt.albefa * (x - st.low))
              .cwiseMax(x - st.opt.move * xr);
  beta = bounds.upper.cwiseMin(st.upp - st.opt.albefa * (st.upp - x))
             .cwiseMin(x + st.opt.move * xr);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (alpha[j] > beta[j]) {  // degenerate box, pin to the midpoint
      const double mid = 0.5 * (alpha[j] + beta[j]);
      alpha[j] = beta[j] = mid;
    }
  }
}

// numerators of the rational approximation: pos/neg gradient parts plus a
// curvature floor; mix keeps a whisker of the opposite side for stability
void build_numerators(const Eigen::VectorXd& grad, const Eigen::VectorXd& dist_u2,
                      const Eigen::VectorXd& dist_l2, const Eigen::VectorXd& xr,
                      double raa, double mix, Eigen::VectorXd& p, Eigen::VectorXd& q) {
  const Eigen::Index n = grad.size();
  p.resize(n);
  q.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double gp = std::max(grad[j], 0.0);
    const double gn = std::max(-grad[j], 0.0);
    const double extra = mix * (gp + gn) + raa / xr[j];
    p[j] = dist_u2[j] * (gp + extra);
    q[j] = dist_l2[j] * (gn + extra);
  }
}

double rational_sum(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                    const Eigen::VectorXd& low, const Eigen::VectorXd& upp,
                    const Eigen::VectorXd& x) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    s += p[j] / (upp[j] - x[j]) + q[j] / (x[j] - low[j]);
  }
  return s;
}

Eigen::VectorXd primal_of_lambda(const MmaSubproblem& sp, double lambda) {
  const Eigen::Index n = sp.alpha.size();
  Eigen::VectorXd x(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double pj = sp.p0[j] + lambda * sp.p1[j];
    const double qj = sp.q0[j] + lambda * sp.q1[j];
    const double rp = std::sqrt(pj), rq = std::sqrt(qj);
    double xj;
    if (rp + rq == 0.0) {
      xj = 0.5 * (sp.alpha[j] + sp.beta[j]);
    } else {
      xj = (rp * sp.low[j] + rq * sp.upp[j]) / (rp + rq);
    }
    x[j] = std::clamp(xj, sp.alpha[j], sp.beta[j]);
  }
  return x;
}

}  // namespace

double subproblem_objective(const MmaSubproblem& sp, const Eigen::VectorXd& x) {
  return sp.r0 + rational_sum(sp.p0, sp.q0, sp.low, sp.upp, x);
}

double subproblem_constraint(const MmaSubproblem& sp, const Eigen::VectorXd& x) {
  // anchored so that its value at the expansion point equals the true g
  return rational_sum(sp.p1, sp.q1, sp.low, sp.upp, x) - sp.b;
}

SubproblemResult solve_subproblem(const MmaSubproblem& sp) {
  SubproblemResult res;
  auto violation = [&](double lambda) {
    return subproblem_constraint(sp, primal_of_lambda(sp, lambda));
  };

  double lo = 0.0;
  if (violation(0.0) <= 0.0) {
    res.lambda = 0.0;
  } else if (violation(sp.lambda_cap) > 0.0) {
    // not attainable inside the box: accept the capped multiplier; the
    // remaining violation is absorbed by the slack variable
    res.lambda = sp.lambda_cap;
  } else {
    double hi = sp.lambda_cap;
    for (int it = 0; it < 160; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (violation(mid) > 0.0) lo = mid;
      else hi = mid;
    }
    res.lambda = hi;  // feasible side of the bracket
  }
  res.x = primal_of_lambda(sp, res.lambda);
  res.relaxation = std::max(violation(res.lambda), 0.0);
  return res;
}

namespace {

MmaSubproblem assemble_subproblem(const Eigen::VectorXd& x, const Eigen::VectorXd& df0,
                                  double g, const Eigen::VectorXd& dg, const Bounds& bounds,
                                  const MmaState& st, double raa0, double raa1, double mix,
                                  double f0) {
  MmaSubproblem sp;
  sp.low = st.low;
  sp.upp = st.upp;
  sp.lambda_cap = st.opt.lambda_cap;
  move_box(x, bounds, st, sp.alpha, sp.beta);

  const Eigen::VectorXd xr = ranges(bounds);
  const Eigen::VectorXd du2 = (st.upp - x).cwiseAbs2();
  const Eigen::VectorXd dl2 = (x - st.low).cwiseAbs2();
  build_numerators(df0, du2, dl2, xr, raa0, mix, sp.p0, sp.q0);
  build_numerators(dg, du2, dl2, xr, raa1, mix, sp.p1, sp.q1);

  // anchor the approximations to the true values at the expansion point
  const double s1 = rational_sum(sp.p1, sp.q1, sp.low, sp.upp, x);
  sp.b = s1 - g;
  sp.r0 = f0 - rational_sum(sp.p0, sp.q0, sp.low, sp.upp, x);
  return sp;
}

void roll_history(const Eigen::VectorXd& x, MmaState& st) {
  st.xold2 = st.iter >= 1 ? st.xold1 : x;
  st.xold1 = x;
  ++st.iter;
}

void validate_step_inputs(const Eigen::VectorXd& x, const Eigen::VectorXd& df0,
                          const Eigen::VectorXd& dg, const Bounds& bounds) {
  const auto n = x.size();
  if (n == 0) throw std::invalid_argument("optimizer: empty design vector");
  if (df0.size() != n || dg.size() != n) throw std::invalid_argument("optimizer: gradient size mismatch");
  if (bounds.lower.size() != n || bounds.upper.size() != n)
    throw std::invalid_argument("optimizer: bounds size mismatch");
  if (((bounds.upper - bounds.lower).array() < 0).any())
    throw std::invalid_argument("optimizer: lower bound above upper bound");
  if (!df0.allFinite() || !dg.allFinite()) throw std::invalid_argument("optimizer: non-finite gradient");
}

}  // namespace

Eigen::VectorXd mma_step(const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& df0,
                         double g, const Eigen::VectorXd& dg, const Bounds& bounds,
                         MmaState& state) {
  validate_step_inputs(x, df0, dg, bounds);
  update_asymptotes(x, bounds, state);
  const MmaSubproblem sp =
      assemble_subproblem(x, df0, g, dg, bounds, state, state.opt.raa, state.opt.raa, 0.001, f0);
  SubproblemResult res = solve_subproblem(sp);
  roll_history(x, state);
  return res.x;
}

Eigen::VectorXd gcmma_step(const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& df0,
                           double g, const Eigen::VectorXd& dg, const Bounds& bounds,
                           GcmmaState& state, const Evaluator& evaluate) {
  validate_step_inputs(x, df0, dg, bounds);
  if (!evaluate) throw std::invalid_argument("gcmma_step: evaluator required");
  MmaState& st = state.mma;
  update_asymptotes(x, bounds, st);

  const Eigen::VectorXd xr = ranges(bounds);
  const auto n = static_cast<double>(x.size());
  state.rho0 = std::max(1e-6, 0.1 * df0.cwiseAbs().dot(xr) / n);
  state.rho1 = std::max(1e-6, 0.1 * dg.cwiseAbs().dot(xr) / n);

  Eigen::VectorXd x_new = x;
  state.last_conservative = false;
  int inner = 0;
  for (; inner < state.inner_cap; ++inner) {
    const MmaSubproblem sp =
        assemble_subproblem(x, df0, g, dg, bounds, st, 0.5 * state.rho0, 0.5 * state.rho1, 0.0, f0);
    const SubproblemResult res = solve_subproblem(sp);
    x_new = res.x;

    const double f0_app = subproblem_objective(sp, x_new);
    const double g_app = subproblem_constraint(sp, x_new);
    const auto [f0_true, g_true] = evaluate(x_new);

    const double tol0 = 1e-10 * (1.0 + std::abs(f0_true));
    const double tol1 = 1e-10 * (1.0 + std::abs(g_true));
    const bool cons0 = f0_app >= f0_true - tol0;
    const bool cons1 = g_app >= g_true - tol1;
    if (cons0 && cons1) {
      state.last_conservative = true;
      ++inner;
      break;
    }

    // raise the curvature of whichever approximation undershot
    double d = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double dx = x_new[j] - x[j];
      d += (st.upp[j] - st.low[j]) * dx * dx /
           ((st.upp[j] - x_new[j]) * (x_new[j] - st.low[j]) * xr[j]);
    }
    d = std::max(d, 1e-12);
    if (!cons0) {
      const double delta = (f0_true - f0_app) / d;
      state.rho0 = std::min(1.1 * (state.rho0 + delta), 10.0 * state.rho0);
    }
    if (!cons1) {
      const double delta = (g_true - g_app) / d;
      state.rho1 = std::min(1.1 * (state.rho1 + delta), 10.0 * state.rho1);
    }
  }
  state.last_inner = inner;
  roll_history(x, st);
  return x_new;
}

bool switch_criterion(double f_prev2, double f_prev1, double f_curr, double delta) {
  auto rel = [](double a, double b) {
    const double den = 0.5 * (std::abs(a) + std::abs(b));
    return den == 0.0 ? 0.0 : (a - b) / den;
  };
  const double prod = rel(f_prev2, f_prev1) * rel(f_prev1, f_curr);
  return prod > -delta && prod < 0.0;
}

bool SwitchMonitor::push(double f) {
  if (switched_) {
    return false;
  }
  if (have_ >= 2 && switch_criterion(f2_, f1_, f, delta_)) {
    switched_ = true;
    return true;
  }
  f2_ = have_ >= 1 ? f1_ : f;
  f1_ = f;
  have_ = std::min(have_ + 1, 2);
  return false;
}

StopReason check_stop(const Eigen::VectorXd& x_new, const Eigen::VectorXd& x_old, double tol,
                      int iter, int max_iter) {
  if (x_new.size() != x_old.size()) throw std::invalid_argument("check_stop: size mismatch");
  if (iter >= max_iter) return StopReason::max_iterations;
  if ((x_new - x_old).lpNorm<Eigen::Infinity>() < tol) return StopReason::design_tolerance;
  return StopReason::none;
}

}  // namespace mmcopt
