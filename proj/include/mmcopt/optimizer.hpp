#pragma once

#include <Eigen/Dense>

#include <functional>

namespace mmcopt {

struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct MmaOptions {
  double asy_init = 0.5;   // first asymptote offset, fraction of the variable range
  double asy_decr = 0.7;   // contraction on oscillation
  double asy_incr = 1.2;   // relaxation on monotone progress
  double move = 0.02;      // move limit, fraction of the variable range
  double albefa = 0.1;     // keep-off margin between iterate and asymptote
  double raa = 1e-5;       // baseline curvature floor
  double lambda_cap = 1e3; // dual cap; reaching it relaxes the constraint
};

// Rational separable approximation around the current iterate with a single
// inequality constraint, solved exactly in the dual.
struct MmaSubproblem {
  Eigen::VectorXd low, upp;     // asymptotes
  Eigen::VectorXd alpha, beta;  // box, strictly inside the asymptotes
  Eigen::VectorXd p0, q0;       // objective numerators
  Eigen::VectorXd p1, q1;       // constraint numerators
  double b = 0.0;               // constraint right-hand side
  double r0 = 0.0;              // objective constant (approximation value offset)
  double lambda_cap = 1e3;
};

struct SubproblemResult {
  Eigen::VectorXd x;
  double lambda = 0.0;      // constraint multiplier
  double relaxation = 0.0;  // positive when the subproblem needed slack
};

// Dual bisection on the single multiplier; the primal minimizer is closed
// form per variable, so the KKT system is met to near machine precision.
SubproblemResult solve_subproblem(const MmaSubproblem& sp);

double subproblem_objective(const MmaSubproblem& sp, const Eigen::VectorXd& x);
double subproblem_constraint(const MmaSubproblem& sp, const Eigen::VectorXd& x);

struct MmaState {
  MmaOptions opt;
  int iter = 0;
  Eigen::VectorXd xold1, xold2, low, upp;
};

// One MMA design update.  f0/df0 describe the objective at x, g/dg the
// constraint in the form g <= 0.
Eigen::VectorXd mma_step(const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& df0,
                         double g, const Eigen::VectorXd& dg, const Bounds& bounds,
                         MmaState& state);

struct GcmmaState {
  MmaState mma;
  double rho0 = 0.0;       // objective curvature, raised until conservative
  double rho1 = 0.0;       // constraint curvature
  int inner_cap = 15;
  int last_inner = 0;
  bool last_conservative = true;
};

// Re-evaluates objective and constraint at a trial design; used by the
// globally convergent inner loop to verify conservativeness.
using Evaluator = std::function<std::pair<double, double>(const Eigen::VectorXd&)>;

Eigen::VectorXd gcmma_step(const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& df0,
                           double g, const Eigen::VectorXd& dg, const Bounds& bounds,
                           GcmmaState& state, const Evaluator& evaluate);

// True when the product of the last two symmetric relative objective
// changes lies strictly inside (-delta, 0): a small overshoot-and-return
// oscillation, the signal to hand over to the conservative scheme.
bool switch_criterion(double f_prev2, double f_prev1, double f_curr, double delta);

// Latching monitor over the objective history.
class SwitchMonitor {
 public:
  explicit SwitchMonitor(double delta) : delta_(delta) {}
  // feeds one objective value; returns true exactly once, on the first
  // iteration the criterion fires
  bool push(double f);
  bool switched() const { return switched_; }

 private:
  double delta_;
  bool switched_ = false;
  int have_ = 0;
  double f2_ = 0.0, f1_ = 0.0;
};

enum class StopReason { none, design_tolerance, max_iterations };

StopReason check_stop(const Eigen::VectorXd& x_new, const Eigen::VectorXd& x_old, double tol,
                      int iter, int max_iter);

}  // namespace mmcopt
