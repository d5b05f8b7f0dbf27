#pragma once

#include "srdkit/linalg.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace srdkit {

/// Raised for malformed models, specs and schedules.
class InvalidModel : public std::invalid_argument {
 public:
  explicit InvalidModel(const std::string& what) : std::invalid_argument(what) {}
};

/// x_{t+1} = A_t x_t + w_t,  w_t ~ N(0, W_t),  x_0 ~ N(0, P0).
///
/// `A` and `W` hold either one matrix per step t = 0..T-1 or a single matrix
/// shared by every step. A stationary model has no horizon and uses A[0], W[0].
template <typename Scalar>
struct GaussMarkovModel {
  bool stationary = false;
  int horizon = 0;
  std::vector<Matrix<Scalar>> A;
  std::vector<Matrix<Scalar>> W;
  Matrix<Scalar> P0;

  static GaussMarkovModel time_invariant(Matrix<Scalar> a, Matrix<Scalar> w, Matrix<Scalar> p0, int horizon) {
    GaussMarkovModel m;
    m.horizon = horizon;
    m.A = {std::move(a)};
    m.W = {std::move(w)};
    m.P0 = std::move(p0);
    return m;
  }

  static GaussMarkovModel stationary_model(Matrix<Scalar> a, Matrix<Scalar> w) {
    GaussMarkovModel m;
    m.stationary = true;
    m.horizon = 1;
    m.P0 = Matrix<Scalar>::Identity(a.rows(), a.cols());
    m.A = {std::move(a)};
    m.W = {std::move(w)};
    return m;
  }

  Index dim() const { return A.empty() ? 0 : A.front().rows(); }
  const Matrix<Scalar>& A_at(int t) const { return A.size() == 1 ? A.front() : A.at(static_cast<std::size_t>(t)); }
  const Matrix<Scalar>& W_at(int t) const { return W.size() == 1 ? W.front() : W.at(static_cast<std::size_t>(t)); }

  void validate() const {
    if (A.empty() || W.empty()) throw InvalidModel("model needs at least one A and one W");
    if (!stationary && horizon <= 0) throw InvalidModel("horizon must be positive");
    const std::size_t steps = stationary ? 1 : static_cast<std::size_t>(horizon);
    if (A.size() != 1 && A.size() != steps)
      throw InvalidModel("expected 1 or " + std::to_string(steps) + " A matrices, got " + std::to_string(A.size()));
    if (W.size() != 1 && W.size() != steps)
      throw InvalidModel("expected 1 or " + std::to_string(steps) + " W matrices, got " + std::to_string(W.size()));
    const Index n = dim();
    if (n <= 0) throw InvalidModel("state dimension must be positive");
    for (std::size_t t = 0; t < A.size(); ++t)
      if (A[t].rows() != n || A[t].cols() != n) throw InvalidModel("A[" + std::to_string(t) + "] is not n x n");
    for (std::size_t t = 0; t < W.size(); ++t) {
      if (W[t].rows() != n || W[t].cols() != n) throw InvalidModel("W[" + std::to_string(t) + "] is not n x n");
      if (!W[t].isApprox(W[t].transpose()) || !is_positive_definite(W[t]))
        throw InvalidModel("W[" + std::to_string(t) + "] must be symmetric positive definite");
    }
    if (P0.rows() != n || P0.cols() != n) throw InvalidModel("P0 is not n x n");
    if (!P0.isApprox(P0.transpose()) || !is_positive_definite(P0))
      throw InvalidModel("P0 must be symmetric positive definite");
  }
};

enum class ConstraintMode { Hard, Soft };

/// Weighted distortion E||x_t - z_t||^2_{Theta_t} either bounded by D_t (hard)
/// or priced at alpha_t / 2 in the objective (soft).
template <typename Scalar>
struct DistortionSpec {
  ConstraintMode mode = ConstraintMode::Hard;
  std::vector<Matrix<Scalar>> Theta;
  std::vector<Scalar> values;  // D_t (hard) or alpha_t (soft)

  static DistortionSpec hard(std::vector<Matrix<Scalar>> theta, std::vector<Scalar> d) {
    return {ConstraintMode::Hard, std::move(theta), std::move(d)};
  }
  static DistortionSpec soft(std::vector<Matrix<Scalar>> theta, std::vector<Scalar> alpha) {
    return {ConstraintMode::Soft, std::move(theta), std::move(alpha)};
  }

  const Matrix<Scalar>& theta_at(int t) const {
    return Theta.size() == 1 ? Theta.front() : Theta.at(static_cast<std::size_t>(t));
  }
  Scalar value_at(int t) const { return values.size() == 1 ? values.front() : values.at(static_cast<std::size_t>(t)); }

  void validate(Index n, int steps) const {
    if (Theta.empty() || values.empty()) throw InvalidModel("distortion spec needs Theta and bound values");
    if (Theta.size() != 1 && Theta.size() != static_cast<std::size_t>(steps))
      throw InvalidModel("expected 1 or " + std::to_string(steps) + " Theta matrices");
    if (values.size() != 1 && values.size() != static_cast<std::size_t>(steps))
      throw InvalidModel("expected 1 or " + std::to_string(steps) + " constraint values");
    for (std::size_t t = 0; t < Theta.size(); ++t) {
      const auto& th = Theta[t];
      if (th.rows() != n || th.cols() != n) throw InvalidModel("Theta[" + std::to_string(t) + "] is not n x n");
      if (!th.isApprox(th.transpose()) || min_eigenvalue(th) < -Scalar(1e-12) * (Scalar(1) + th.norm()))
        throw InvalidModel("Theta[" + std::to_string(t) + "] must be symmetric positive semidefinite");
    }
    for (Scalar v : values)
      if (!(v > Scalar(0)))
        throw InvalidModel(mode == ConstraintMode::Hard ? "distortion bounds D_t must be positive"
                                                        : "soft multipliers alpha_t must be positive");
  }
};

/// Solved filter covariances. Index k of each list holds time step t = k + 1.
template <typename Scalar>
struct CovarianceSchedule {
  std::vector<Matrix<Scalar>> P_filt;
  std::vector<Matrix<Scalar>> Pi;
  Scalar objective_nats = Scalar(0);  // max-det objective, without the constant
  Scalar constant_c = Scalar(0);
  Scalar rate_nats = Scalar(0);  // c - sum_t 1/2 log det Pi_t
};

}  // namespace srdkit
