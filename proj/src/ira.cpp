#include "mmcopt/ira.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmcopt {

namespace {
constexpr double kDetectScale = 1e-12;  // tolerance factor on max|K_ref|
constexpr double kTinyNorm = std::numeric_limits<double>::min();
}  // namespace

int gauss_seidel(const SpMat& K, Eigen::VectorXd& U, const Eigen::VectorXd& F, int sweeps) {
  const auto n = K.rows();
  if (K.cols() != n) throw std::invalid_argument("gauss_seidel: matrix not square");
  if (U.size() != n || F.size() != n) throw std::invalid_argument("gauss_seidel: size mismatch");
  if (sweeps < 0) throw std::invalid_argument("gauss_seidel: negative sweep count");

  const Eigen::VectorXd diag = K.diagonal();
  if (diag.size() == 0 && n > 0) throw std::runtime_error("gauss_seidel: empty diagonal");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(diag[j] > 0.0)) throw std::runtime_error("gauss_seidel: non-positive diagonal entry");
  }

  for (int s = 0; s < sweeps; ++s) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double acc = F[j];
      // column j doubles as row j because K is symmetric
      for (SpMat::InnerIterator it(K, j); it; ++it) {
        if (it.row() == j) continue;
        acc -= it.value() * U[it.row()];
      }
      U[j] = acc / diag[j];
    }
  }
  return sweeps;
}

Eigen::VectorXd restrict_residual(const SpMat& P, const SpMat& K,
                                  const Eigen::VectorXd& U, const Eigen::VectorXd& F) {
  return P.transpose() * (F - K * U);
}

void ReferenceFactorization::reset(const SpMat& K, int tag) {
  if (!llt_) llt_ = std::make_unique<Eigen::SimplicialLLT<SpMat>>();
  llt_->compute(K);
  if (llt_->info() != Eigen::Success)
    throw std::runtime_error("ReferenceFactorization: cholesky failed (matrix not SPD?)");
  K_ref = K;
  max_abs = K.nonZeros() > 0
                ? Eigen::Map<const Eigen::VectorXd>(K.valuePtr(), K.nonZeros()).cwiseAbs().maxCoeff()
                : 0.0;
  dx_ref.resize(0);
  d_ref.resize(0);
  iteration_tag = tag;
}

Eigen::VectorXd ReferenceFactorization::solve(const Eigen::VectorXd& rhs) const {
  if (!llt_) throw std::logic_error("ReferenceFactorization: solve before reset");
  return llt_->solve(rhs);
}

Eigen::MatrixXd ReferenceFactorization::solve(const Eigen::MatrixXd& rhs) const {
  if (!llt_) throw std::logic_error("ReferenceFactorization: solve before reset");
  return llt_->solve(rhs);
}

SpMat ReferenceFactorization::reconstruct() const {
  if (!llt_) throw std::logic_error("ReferenceFactorization: reconstruct before reset");
  SpMat L = llt_->matrixL();
  SpMat LLt = L * SpMat(L.transpose());
  SpMat rec = llt_->permutationPinv() * LLt;
  rec = rec * llt_->permutationP();
  return rec;
}

Eigen::VectorXd modification_rowsums(const SpMat& K_i, const SpMat& K_ref) {
  if (K_i.rows() != K_ref.rows() || K_i.cols() != K_ref.cols())
    throw std::invalid_argument("modification_rowsums: shape mismatch");
  SpMat D = K_i - K_ref;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(K_i.rows());
  for (int j = 0; j < D.outerSize(); ++j) {
    for (SpMat::InnerIterator it(D, j); it; ++it) {
      r[it.row()] += std::abs(it.value());
    }
  }
  return r;
}

std::vector<int> detect_modifications(const SpMat& K_i, const ReferenceFactorization& ref,
                                      const Eigen::VectorXd& delta) {
  if (!ref.ready()) throw std::logic_error("detect_modifications: no reference");
  if (delta.size() != K_i.rows())
    throw std::invalid_argument("detect_modifications: residual size mismatch");
  const Eigen::VectorXd rowsum = modification_rowsums(K_i, ref.K_ref);
  const double tau = kDetectScale * ref.max_abs;
  std::vector<int> mods;
  for (Eigen::Index j = 0; j < rowsum.size(); ++j) {
    if (rowsum[j] + std::abs(delta[j]) > tau) mods.push_back(static_cast<int>(j));
  }
  return mods;
}

ReanalysisWorkspace build_reanalysis(const ReferenceFactorization& ref, const SpMat& K_i,
                                     const std::vector<int>& mods) {
  if (!ref.ready()) throw std::logic_error("build_reanalysis: no reference");
  const int n = static_cast<int>(K_i.rows());
  const int m = static_cast<int>(mods.size());
  ReanalysisWorkspace ws;
  ws.mods = mods;
  if (m == 0) {
    ws.ok = true;
    return ws;
  }
  for (int j : mods) {
    if (j < 0 || j >= n) throw std::invalid_argument("build_reanalysis: modified dof out of range");
  }

  // constrained right-hand sides straight from the modified matrix
  ws.R = Eigen::MatrixXd::Zero(n, m);
  for (int t = 0; t < m; ++t) {
    const int j = mods[t];
    for (SpMat::InnerIterator it(K_i, j); it; ++it) ws.R(it.row(), t) = -it.value();
    for (int s : mods) ws.R(s, t) = 0.0;
    ws.R(j, t) = 1.0;
  }

  // Influence columns of the reference inverse at the modified dofs.  The
  // low-rank (Woodbury) update of the reference factor by the constraint
  // modification collapses to normalizing these columns so that their
  // modified-dof block is the identity; that normalized bundle solves the
  // constrained system for R exactly, with no new factorization.
  Eigen::MatrixXd ES = Eigen::MatrixXd::Zero(n, m);
  for (int t = 0; t < m; ++t) ES(mods[t], t) = 1.0;
  const Eigen::MatrixXd W = ref.solve(ES);
  Eigen::MatrixXd WS(m, m);
  for (int t = 0; t < m; ++t) WS.row(t) = W.row(mods[t]);
  Eigen::LLT<Eigen::MatrixXd> ws_llt(WS);
  if (ws_llt.info() != Eigen::Success) {
    ws.ok = false;
    return ws;
  }
  ws.B = ws_llt.solve(W.transpose()).transpose();

  // condense the modified rows of K_i onto the fundamental solutions
  Eigen::MatrixXd KS = Eigen::MatrixXd::Zero(n, m);
  for (int t = 0; t < m; ++t) {
    for (SpMat::InnerIterator it(K_i, mods[t]); it; ++it) KS(it.row(), t) = it.value();
  }
  ws.K_B = KS.transpose() * ws.B;
  ws.K_B_lu.compute(ws.K_B);
  ws.ok = true;
  return ws;
}

Eigen::VectorXd reanalysis_correction(ReanalysisWorkspace& ws, const Eigen::VectorXd& delta) {
  if (!ws.ok) throw std::logic_error("reanalysis_correction: workspace not usable");
  ws.delta = delta;
  const int m = static_cast<int>(ws.mods.size());
  if (m == 0) return Eigen::VectorXd::Zero(delta.size());
  Eigen::VectorXd delta_u(m);
  for (int t = 0; t < m; ++t) delta_u[t] = delta[ws.mods[t]];
  ws.y = ws.K_B_lu.solve(delta_u);
  const double res = (ws.K_B * ws.y - delta_u).norm();
  if (!(res <= 1e-8 * std::max(delta_u.norm(), 1.0) ) || !ws.y.allFinite()) {
    ws.ok = false;  // condensed system singular: caller must fall back
    return Eigen::VectorXd::Zero(delta.size());
  }
  return ws.B * ws.y;
}

Eigen::VectorXd exact_reanalysis(const ReferenceFactorization& ref, const SpMat& K_i,
                                 const Eigen::VectorXd& d_i, const std::vector<int>& mods) {
  if (!ref.ready()) throw std::logic_error("exact_reanalysis: no reference");
  if (ref.dx_ref.size() != K_i.rows())
    throw std::logic_error("exact_reanalysis: reference solution missing or mismatched");
  const Eigen::VectorXd delta = d_i - K_i * ref.dx_ref;
  if (mods.empty()) {
    // matrix unchanged: any residual imbalance is a pure right-hand-side
    // change, answered by two triangular solves with the retained factor
    if (delta.lpNorm<Eigen::Infinity>() == 0.0) return ref.dx_ref;
    return ref.dx_ref + ref.solve(delta);
  }
  ReanalysisWorkspace ws = build_reanalysis(ref, K_i, mods);
  if (!ws.ok) throw std::runtime_error("exact_reanalysis: singular condensed system");
  Eigen::VectorXd ddx = reanalysis_correction(ws, delta);
  if (!ws.ok) throw std::runtime_error("exact_reanalysis: singular condensed system");
  return ref.dx_ref + ddx;
}

void v_cycle(const TwoGridHierarchy& hg, const SpMat& K, const Eigen::VectorXd& F,
             Eigen::VectorXd& U, const CoarseSolve& coarse) {
  gauss_seidel(K, U, F, hg.sweeps);
  const Eigen::VectorXd d = hg.Pt * (F - K * U);
  const Eigen::VectorXd dx = coarse(d);
  U += hg.P * dx;
  gauss_seidel(K, U, F, hg.sweeps);
}

std::string to_string(SolverMode m) {
  return m == SolverMode::full_factorization ? "full-factorization" : "reanalysis";
}

IraSolver::IraSolver(const GridSpec& fine, const IraConfig& cfg) : cfg_(cfg) {
  if (!(cfg.eta > 0.0)) throw std::invalid_argument("IraSolver: eta must be positive");
  if (!(cfg.eps_star > 0.0)) throw std::invalid_argument("IraSolver: eps_star must be positive");
  Prolongation pr = build_prolongation(fine);
  hg_.P = std::move(pr.P);
  hg_.Pt = hg_.P.transpose();
  hg_.sweeps = cfg.sweeps;
  n_c_ = static_cast<int>(hg_.P.cols());
}

void IraSolver::set_matrix(const SpMat& K, int outer_iteration) {
  K_ = &K;
  Kc_ = hg_.Pt * K * hg_.P;

  n_d_ = 0;
  std::vector<int> mods;
  if (ref_.ready() && !force_refactor_) {
    const Eigen::VectorXd rowsum = modification_rowsums(Kc_, ref_.K_ref);
    const double tau = kDetectScale * ref_.max_abs;
    for (Eigen::Index j = 0; j < rowsum.size(); ++j) {
      if (rowsum[j] > tau) mods.push_back(static_cast<int>(j));
    }
    n_d_ = static_cast<int>(mods.size());
  }

  const bool refactor = force_refactor_ || !ref_.ready() ||
                        static_cast<double>(n_d_) / static_cast<double>(n_c_) > cfg_.eta;
  if (refactor) {
    ref_.reset(Kc_, outer_iteration);
    ref_pair_pending_ = true;
    ws_ = ReanalysisWorkspace{};
    mode_ = SolverMode::full_factorization;
    ++refactor_count_;
    force_refactor_ = false;
    n_d_ = 0;
  } else {
    ws_ = build_reanalysis(ref_, Kc_, mods);
    if (!ws_.ok) {
      // detached or degenerate modification: refresh the factorization
      ref_.reset(Kc_, outer_iteration);
      ref_pair_pending_ = true;
      ws_ = ReanalysisWorkspace{};
      mode_ = SolverMode::full_factorization;
      ++refactor_count_;
      n_d_ = 0;
      return;
    }
    mode_ = SolverMode::reanalysis;
    ++reanalysis_count_;
  }
}

Eigen::VectorXd IraSolver::solve(const Eigen::VectorXd& F, const Eigen::VectorXd& U0,
                                 SolveReport& rep) {
  if (K_ == nullptr) throw std::logic_error("IraSolver: solve before set_matrix");
  const SpMat& K = *K_;
  if (F.size() != K.rows() || U0.size() != K.rows())
    throw std::invalid_argument("IraSolver: size mismatch");

  rep = SolveReport{};
  rep.mode = mode_;
  rep.n_d = n_d_;
  rep.n_c = n_c_;

  Eigen::VectorXd U = U0;
  double energy_prev = 0.0;
  bool have_prev = false;

  auto coarse = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
    // anchor every cycle at the reference-factor solution of the current
    // right-hand side; the leftover imbalance then lives only on the dofs
    // whose matrix rows actually changed, which the workspace solves exactly
    Eigen::VectorXd dx = ref_.solve(d);
    if (ref_pair_pending_) {
      ref_.dx_ref = dx;
      ref_.d_ref = d;
      ref_pair_pending_ = false;
    }
    if (!ws_.mods.empty() && ws_.ok) {
      const Eigen::VectorXd delta = d - Kc_ * dx;
      const Eigen::VectorXd ddx = reanalysis_correction(ws_, delta);
      if (!ws_.ok) {
        rep.breakdown = true;
        return dx;
      }
      dx += ddx;
    }
    return dx;
  };

  int cycles = 0;
  while (cycles < cfg_.max_cycles) {
    v_cycle(hg_, K, F, U, coarse);
    ++cycles;
    if (rep.breakdown) {
      force_refactor_ = true;
      break;
    }
    const double energy = U.dot(K * U);
    if (have_prev) {
      rep.slack = std::abs(energy - energy_prev) / std::max(std::abs(energy), kTinyNorm);
      if (rep.slack < cfg_.eps_star) {
        rep.converged = true;
        break;
      }
    }
    energy_prev = energy;
    have_prev = true;
  }
  rep.v_cycles = cycles;
  rep.rel_residual = (F - K * U).norm() / std::max(F.norm(), kTinyNorm);
  return U;
}

}  // namespace mmcopt
