#pragma once

// Builders that turn a Gauss-Markov source and a distortion specification
// into a weighted max-det problem over the covariance schedule.
//
// Decision variables per step: P_t = P_{t|t} and Pi_t, with P_T shared with
// Pi_T. Every matrix inequality becomes a PSD slack block with weight 0; the
// slack is tied to the variables by equality rows on its upper triangle,
// off-diagonal coordinates scaled by sqrt(2).

#include "srdkit/linalg.hpp"
#include "srdkit/maxdet.hpp"
#include "srdkit/model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace srdkit {

/// Block indices of the SRD variables inside the max-det problem; entry k refers to step t = k + 1.
struct SrdLayout {
  bool stationary = false;
  std::vector<Index> pi;
  std::vector<Index> p;      // p.back() == pi.back() for finite horizons
  std::vector<Index> pred;   // slack of P_t <= A P_{t-1} A' + W
  std::vector<Index> lmi;    // 2n x 2n slack, steps 1..T-1 (one block when stationary)
  std::vector<Index> trace;  // scalar slack of Tr(Theta P_t) <= D_t, hard mode only
};

template <typename Scalar>
struct SrdProblem {
  maxdet::MaxDetProblem<Scalar> problem;
  SrdLayout layout;
  Scalar constant = Scalar(0);
  Index n = 0;
  int horizon = 0;
};

namespace detail {

template <typename Scalar>
struct LinearImage {
  Index block;
  Matrix<Scalar> J;  // contributes sign * J V J'
  Scalar sign;
};

// slack + sum_k sign_k J_k V_k J_k' = K, one row per upper-triangular coordinate.
template <typename Scalar>
void add_sym_equation(maxdet::MaxDetProblem<Scalar>& p, Index slack, const std::vector<LinearImage<Scalar>>& images,
                      const Matrix<Scalar>& K) {
  const Index n = K.rows();
  const Scalar r2 = std::sqrt(Scalar(2));
  std::vector<Scalar> rhs;
  for (Index c = 0; c < n; ++c) {
    for (Index r = 0; r <= c; ++r) {
      const Scalar e = r == c ? Scalar(1) : Scalar(1) / r2;
      maxdet::EqRow<Scalar> row;
      row.push_back({slack, {{r, c, e}}});
      for (const auto& im : images) {
        Matrix<Scalar> coeff = im.J.row(r).transpose() * im.J.row(c);
        coeff = (coeff + coeff.transpose()).eval() * (e * im.sign * (r == c ? Scalar(0.5) : Scalar(1)));
        auto term = maxdet::make_term(im.block, coeff);
        if (!term.entries.empty()) row.push_back(std::move(term));
      }
      p.eq_map.add_row(std::move(row));
      rhs.push_back(r == c ? K(r, r) : r2 * K(r, c));
    }
  }
  const Index old = p.rhs.size();
  p.rhs.conservativeResize(old + static_cast<Index>(rhs.size()));
  for (std::size_t k = 0; k < rhs.size(); ++k) p.rhs(old + static_cast<Index>(k)) = rhs[k];
}

template <typename Scalar>
Index add_block(maxdet::MaxDetProblem<Scalar>& p, Index size, Scalar weight) {
  p.blocks.push_back({size, weight});
  p.cost.blocks.push_back(Matrix<Scalar>::Zero(size, size));
  return p.num_blocks() - 1;
}

template <typename Scalar>
Matrix<Scalar> stacked(const Matrix<Scalar>& top, const Matrix<Scalar>& bottom) {
  Matrix<Scalar> j(top.rows() + bottom.rows(), top.cols());
  j << top, bottom;
  return j;
}

// [[P - Pi, P A'], [A P, A P A' + W]]
template <typename Scalar>
Matrix<Scalar> lmi_value(const Matrix<Scalar>& P, const Matrix<Scalar>& Pi, const Matrix<Scalar>& A,
                         const Matrix<Scalar>& W) {
  const Index n = P.rows();
  Matrix<Scalar> s(2 * n, 2 * n);
  s << P - Pi, P * A.transpose(), A * P, A * P * A.transpose() + W;
  return srdkit::symmetrize(s);
}

template <typename Scalar>
Scalar spectral_norm(const Matrix<Scalar>& a) {
  Eigen::JacobiSVD<Matrix<Scalar>> svd(a);
  return svd.singularValues()(0);
}

}  // namespace detail

/// c = 1/2 log det(A_0 P0 A_0' + W_0) + sum_{t=1}^{T-1} 1/2 log det W_t.
template <typename Scalar>
Scalar objective_constant(const GaussMarkovModel<Scalar>& model) {
  model.validate();
  if (model.stationary) return Scalar(0.5) * log_det_spd(model.W_at(0));
  const auto& a0 = model.A_at(0);
  Scalar c = Scalar(0.5) * log_det_spd(Matrix<Scalar>(a0 * model.P0 * a0.transpose() + model.W_at(0)));
  for (int t = 1; t < model.horizon; ++t) c += Scalar(0.5) * log_det_spd(model.W_at(t));
  return c;
}

/// PBH test: rank [A - lambda I; Theta] = n at every eigenvalue with |lambda| >= 1.
template <typename Scalar>
bool is_detectable(const Matrix<Scalar>& A, const Matrix<Scalar>& Theta, Scalar tol = Scalar(1e-9)) {
  using Complex = std::complex<Scalar>;
  using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
  const Index n = A.rows();
  Eigen::EigenSolver<Matrix<Scalar>> es(A, false);
  const Scalar scale = std::max(Scalar(1), std::max(A.norm(), Theta.norm()));
  for (Index k = 0; k < n; ++k) {
    const Complex lambda = es.eigenvalues()(k);
    if (std::abs(lambda) < Scalar(1) - tol) continue;
    CMatrix m(2 * n, n);
    m.topRows(n) = A.template cast<Complex>() - lambda * CMatrix::Identity(n, n);
    m.bottomRows(n) = Theta.template cast<Complex>();
    Eigen::JacobiSVD<CMatrix> svd(m);
    if (svd.singularValues()(n - 1) <= tol * scale) return false;
  }
  return true;
}

namespace detail {

template <typename Scalar>
SrdProblem<Scalar> build_finite(const GaussMarkovModel<Scalar>& model, const DistortionSpec<Scalar>& spec) {
  model.validate();
  if (model.stationary) throw InvalidModel("finite-horizon builder needs a model with a horizon");
  const int T = model.horizon;
  const Index n = model.dim();
  spec.validate(n, T);
  const bool hard = spec.mode == ConstraintMode::Hard;

  SrdProblem<Scalar> out;
  out.n = n;
  out.horizon = T;
  out.constant = objective_constant(model);
  auto& p = out.problem;
  auto& L = out.layout;
  p.time_chained = true;
  p.rhs.resize(0);

  const Matrix<Scalar> I = Matrix<Scalar>::Identity(n, n);
  const Matrix<Scalar> Z = Matrix<Scalar>::Zero(n, n);
  for (int t = 1; t <= T; ++t) {
    L.pi.push_back(add_block(p, n, Scalar(0.5)));
    L.p.push_back(t < T ? add_block(p, n, Scalar(0)) : L.pi.back());
  }
  for (int t = 1; t <= T; ++t) L.pred.push_back(add_block(p, n, Scalar(0)));
  for (int t = 1; t < T; ++t) L.lmi.push_back(add_block(p, 2 * n, Scalar(0)));
  if (hard)
    for (int t = 1; t <= T; ++t) L.trace.push_back(add_block(p, 1, Scalar(0)));

  for (int t = 1; t <= T; ++t) {
    const std::size_t k = static_cast<std::size_t>(t - 1);
    const Matrix<Scalar>& A = model.A_at(t - 1);
    const Matrix<Scalar>& W = model.W_at(t - 1);
    if (t == 1) {
      add_sym_equation<Scalar>(p, L.pred[k], {{L.p[k], I, Scalar(1)}},
                               srdkit::symmetrize(Matrix<Scalar>(A * model.P0 * A.transpose() + W)));
    } else {
      add_sym_equation<Scalar>(p, L.pred[k], {{L.p[k], I, Scalar(1)}, {L.p[k - 1], A, Scalar(-1)}}, W);
    }
  }
  for (int t = 1; t < T; ++t) {
    const std::size_t k = static_cast<std::size_t>(t - 1);
    const Matrix<Scalar>& A = model.A_at(t);
    Matrix<Scalar> K = Matrix<Scalar>::Zero(2 * n, 2 * n);
    K.bottomRightCorner(n, n) = model.W_at(t);
    add_sym_equation<Scalar>(p, L.lmi[k], {{L.p[k], stacked(I, A), Scalar(-1)}, {L.pi[k], stacked(I, Z), Scalar(1)}},
                             K);
  }
  for (int t = 1; t <= T; ++t) {
    const std::size_t k = static_cast<std::size_t>(t - 1);
    const Matrix<Scalar>& theta = spec.theta_at(t - 1);
    if (hard) {
      maxdet::EqRow<Scalar> row;
      row.push_back({L.trace[k], {{0, 0, Scalar(1)}}});
      row.push_back(maxdet::make_term(L.p[k], theta));
      p.eq_map.add_row(std::move(row));
      p.rhs.conservativeResize(p.rhs.size() + 1);
      p.rhs(p.rhs.size() - 1) = spec.value_at(t - 1);
    } else {
      p.cost[L.p[k]] += Scalar(0.5) * spec.value_at(t - 1) * srdkit::symmetrize(theta);
    }
  }

  // P_t = delta I (t < T), Pi_t = P_T = delta^2 I is strictly feasible for small delta.
  Scalar wmin = std::numeric_limits<Scalar>::infinity(), amax(0);
  for (int t = 0; t < T; ++t) {
    wmin = std::min(wmin, min_eigenvalue(model.W_at(t)));
    amax = std::max(amax, spectral_norm(model.A_at(t)));
  }
  Scalar delta = std::min(Scalar(0.5) * wmin / (Scalar(1) + amax * amax), Scalar(0.5));
  if (hard)
    for (int t = 0; t < T; ++t)
      delta = std::min(delta, Scalar(0.5) * spec.value_at(t) / std::max(spec.theta_at(t).trace(), Scalar(1e-300)));

  for (int attempt = 0; attempt < 60; ++attempt, delta *= Scalar(0.5)) {
    auto x = maxdet::BlockDiag<Scalar>::zeros(p.blocks);
    for (int t = 1; t <= T; ++t) {
      const std::size_t k = static_cast<std::size_t>(t - 1);
      x[L.pi[k]] = delta * delta * I;
      if (t < T) x[L.p[k]] = delta * I;
    }
    for (int t = 1; t <= T; ++t) {
      const std::size_t k = static_cast<std::size_t>(t - 1);
      const Matrix<Scalar>& A = model.A_at(t - 1);
      const Matrix<Scalar> prev = t == 1 ? model.P0 : x[L.p[k - 1]];
      x[L.pred[k]] = srdkit::symmetrize(Matrix<Scalar>(A * prev * A.transpose() + model.W_at(t - 1) - x[L.p[k]]));
      if (hard) x[L.trace[k]](0, 0) = spec.value_at(t - 1) - (spec.theta_at(t - 1) * x[L.p[k]]).trace();
    }
    for (int t = 1; t < T; ++t) {
      const std::size_t k = static_cast<std::size_t>(t - 1);
      x[L.lmi[k]] = lmi_value<Scalar>(x[L.p[k]], x[L.pi[k]], model.A_at(t), model.W_at(t));
    }
    if (maxdet::detail::all_positive_definite(x)) {
      p.hint = std::move(x);
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Hard-constrained finite-horizon problem: minimize -sum 1/2 log det Pi_t s.t. Tr(Theta_t P_t) <= D_t.
template <typename Scalar>
SrdProblem<Scalar> build_finite_hard(const GaussMarkovModel<Scalar>& model, const DistortionSpec<Scalar>& spec) {
  if (spec.mode != ConstraintMode::Hard) throw InvalidModel("build_finite_hard needs a hard distortion spec");
  return detail::build_finite(model, spec);
}

/// Soft-constrained finite-horizon problem: distortion priced at alpha_t / 2 in the objective.
template <typename Scalar>
SrdProblem<Scalar> build_finite_soft(const GaussMarkovModel<Scalar>& model, const DistortionSpec<Scalar>& spec) {
  if (spec.mode != ConstraintMode::Soft) throw InvalidModel("build_finite_soft needs a soft distortion spec");
  return detail::build_finite(model, spec);
}

/// Infinite-horizon per-stage problem; its optimal value plus the constant is R(D) in nats.
template <typename Scalar>
SrdProblem<Scalar> build_stationary(const Matrix<Scalar>& A, const Matrix<Scalar>& W, const Matrix<Scalar>& Theta,
                                    Scalar D) {
  const auto model = GaussMarkovModel<Scalar>::stationary_model(A, W);
  model.validate();
  const Index n = A.rows();
  const auto spec = DistortionSpec<Scalar>::hard({Theta}, {D});
  spec.validate(n, 1);
  if (!is_detectable<Scalar>(A, Theta))
    throw InvalidModel("(A, Theta) is not detectable: an unstable mode is invisible to the distortion weight");

  SrdProblem<Scalar> out;
  out.n = n;
  out.horizon = 1;
  out.constant = Scalar(0.5) * log_det_spd(W);
  auto& p = out.problem;
  auto& L = out.layout;
  L.stationary = true;
  p.rhs.resize(0);

  const Matrix<Scalar> I = Matrix<Scalar>::Identity(n, n);
  const Matrix<Scalar> Zn = Matrix<Scalar>::Zero(n, n);
  L.pi.push_back(detail::add_block(p, n, Scalar(0.5)));
  L.p.push_back(detail::add_block(p, n, Scalar(0)));
  L.pred.push_back(detail::add_block(p, n, Scalar(0)));
  L.lmi.push_back(detail::add_block(p, 2 * n, Scalar(0)));
  L.trace.push_back(detail::add_block(p, 1, Scalar(0)));

  detail::add_sym_equation<Scalar>(p, L.pred[0], {{L.p[0], I, Scalar(1)}, {L.p[0], A, Scalar(-1)}}, W);
  Matrix<Scalar> K = Matrix<Scalar>::Zero(2 * n, 2 * n);
  K.bottomRightCorner(n, n) = W;
  detail::add_sym_equation<Scalar>(
      p, L.lmi[0], {{L.p[0], detail::stacked(I, A), Scalar(-1)}, {L.pi[0], detail::stacked(I, Zn), Scalar(1)}}, K);
  maxdet::EqRow<Scalar> row;
  row.push_back({L.trace[0], {{0, 0, Scalar(1)}}});
  row.push_back(maxdet::make_term(L.p[0], srdkit::symmetrize(Theta)));
  p.eq_map.add_row(std::move(row));
  p.rhs.conservativeResize(p.rhs.size() + 1);
  p.rhs(p.rhs.size() - 1) = D;

  const Scalar wmin = min_eigenvalue(W);
  const Scalar an = detail::spectral_norm(A);
  Scalar delta = std::min({Scalar(0.5) * wmin / (Scalar(1) + an * an), Scalar(0.5),
                           Scalar(0.5) * D / std::max(Theta.trace(), Scalar(1e-300))});
  for (int attempt = 0; attempt < 60; ++attempt, delta *= Scalar(0.5)) {
    auto x = maxdet::BlockDiag<Scalar>::zeros(p.blocks);
    x[L.p[0]] = delta * I;
    x[L.pi[0]] = delta * delta * I;
    x[L.pred[0]] = srdkit::symmetrize(Matrix<Scalar>(delta * A * A.transpose() + W - delta * I));
    x[L.lmi[0]] = detail::lmi_value<Scalar>(x[L.p[0]], x[L.pi[0]], A, W);
    x[L.trace[0]](0, 0) = D - delta * Theta.trace();
    if (maxdet::detail::all_positive_definite(x)) {
      p.hint = std::move(x);
      break;
    }
  }
  return out;
}

/// Reads P_{t|t} and Pi_t back out of a solved max-det problem.
template <typename Scalar>
CovarianceSchedule<Scalar> decode_schedule(const SrdProblem<Scalar>& srd, const maxdet::SolverSolution<Scalar>& sol) {
  CovarianceSchedule<Scalar> s;
  s.constant_c = srd.constant;
  s.objective_nats = sol.objective;
  s.rate_nats = srd.constant;
  for (std::size_t k = 0; k < srd.layout.pi.size(); ++k) {
    s.P_filt.push_back(srdkit::symmetrize(sol.X[srd.layout.p[k]]));
    s.Pi.push_back(srdkit::symmetrize(sol.X[srd.layout.pi[k]]));
    s.rate_nats -= Scalar(0.5) * log_det_spd(s.Pi.back());
  }
  return s;
}

/// Multipliers alpha_t = 2 z_t of the hard distortion constraints; the soft
/// problem with these prices has the same optimal schedule.
template <typename Scalar>
std::vector<Scalar> distortion_multipliers(const SrdProblem<Scalar>& srd, const maxdet::SolverSolution<Scalar>& sol) {
  std::vector<Scalar> alpha;
  for (Index b : srd.layout.trace) alpha.push_back(Scalar(2) * sol.Z[b](0, 0));
  return alpha;
}

template <typename Scalar>
struct ScheduleResult {
  SrdProblem<Scalar> srd;
  maxdet::SolverSolution<Scalar> solution;
  CovarianceSchedule<Scalar> schedule;
};

/// Builds the hard or soft finite-horizon problem for `spec` and solves it.
template <typename Scalar>
ScheduleResult<Scalar> solve_schedule(const GaussMarkovModel<Scalar>& model, const DistortionSpec<Scalar>& spec,
                                      const maxdet::SolverConfig& cfg = {}) {
  ScheduleResult<Scalar> r;
  r.srd = spec.mode == ConstraintMode::Hard ? build_finite_hard(model, spec) : build_finite_soft(model, spec);
  r.solution = maxdet::solve(r.srd.problem, cfg);
  if (r.solution.status == maxdet::SolverStatus::Optimal) r.schedule = decode_schedule(r.srd, r.solution);
  return r;
}

template <typename Scalar>
ScheduleResult<Scalar> solve_stationary(const Matrix<Scalar>& A, const Matrix<Scalar>& W, const Matrix<Scalar>& Theta,
                                        Scalar D, const maxdet::SolverConfig& cfg = {}) {
  ScheduleResult<Scalar> r;
  r.srd = build_stationary(A, W, Theta, D);
  r.solution = maxdet::solve(r.srd.problem, cfg);
  if (r.solution.status == maxdet::SolverStatus::Optimal) r.schedule = decode_schedule(r.srd, r.solution);
  return r;
}

}  // namespace srdkit
