#pragma once

// Recovery of the optimal sensor y_t = C_t x_t + v_t, v_t ~ N(0, V_t), and the
// matching Kalman filter covariances from a solved covariance schedule.

#include "srdkit/linalg.hpp"
#include "srdkit/model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace srdkit {

/// Raised when a schedule is not reachable by any sensor (P_{t|t} above the prediction covariance).
class InconsistentSchedule : public std::runtime_error {
 public:
  explicit InconsistentSchedule(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr double default_rank_tol = 1e-5;

template <typename Scalar>
struct SensorFactor {
  Matrix<Scalar> C;  // r x n
  Matrix<Scalar> V;  // r x r
  Index rank = 0;
};

/// Index k of every list holds time step t = k + 1.
template <typename Scalar>
struct SensorDesign {
  std::vector<Matrix<Scalar>> SNR;
  std::vector<Matrix<Scalar>> C;
  std::vector<Matrix<Scalar>> V;
  std::vector<Index> ranks;
  std::vector<Matrix<Scalar>> P_pred;
  std::vector<Matrix<Scalar>> P_filt;
  std::vector<Scalar> rate_per_step_nats;

  Scalar total_rate_nats() const {
    Scalar acc(0);
    for (Scalar r : rate_per_step_nats) acc += r;
    return acc;
  }
};

namespace detail {

// Previous filtered covariance feeding step k; a stationary schedule feeds itself.
template <typename Scalar>
const Matrix<Scalar>& previous_filtered(const GaussMarkovModel<Scalar>& model, const std::vector<Matrix<Scalar>>& p_filt,
                                        std::size_t k) {
  if (model.stationary) return p_filt.front();
  return k == 0 ? model.P0 : p_filt[k - 1];
}

template <typename Scalar>
Matrix<Scalar> predict(const GaussMarkovModel<Scalar>& model, const Matrix<Scalar>& prev, std::size_t k) {
  const int t = model.stationary ? 0 : static_cast<int>(k);
  const auto& a = model.A_at(t);
  return srdkit::symmetrize(Matrix<Scalar>(a * prev * a.transpose() + model.W_at(t)));
}

template <typename Scalar>
void check_steps(const GaussMarkovModel<Scalar>& model, std::size_t steps) {
  const std::size_t expected = model.stationary ? 1 : static_cast<std::size_t>(model.horizon);
  if (steps != expected)
    throw InvalidModel("expected " + std::to_string(expected) + " steps, got " + std::to_string(steps));
}

}  // namespace detail

/// SNR_t = P_{t|t}^{-1} - (A_{t-1} P_{t-1|t-1} A_{t-1}' + W_{t-1})^{-1}, projected onto the PSD cone.
///
/// Eigenvalues down to -rank_tol * lambda_max(P_{t|t}^{-1}) are treated as round-off; anything more
/// negative means the schedule asks for more than a sensor can deliver.
template <typename Scalar>
std::vector<Matrix<Scalar>> snr_from_schedule(const CovarianceSchedule<Scalar>& schedule,
                                              const GaussMarkovModel<Scalar>& model,
                                              Scalar rank_tol = Scalar(default_rank_tol)) {
  model.validate();
  detail::check_steps(model, schedule.P_filt.size());
  std::vector<Matrix<Scalar>> out;
  for (std::size_t k = 0; k < schedule.P_filt.size(); ++k) {
    const auto& pf = schedule.P_filt[k];
    if (pf.rows() != model.dim() || pf.cols() != model.dim())
      throw InvalidModel("P_filt[" + std::to_string(k) + "] has the wrong size");
    if (!is_positive_definite(pf)) throw InconsistentSchedule("P_filt at step " + std::to_string(k + 1) + " is not positive definite");
    const Matrix<Scalar> info = inverse_spd(pf);
    const Matrix<Scalar> pred = detail::predict(model, detail::previous_filtered(model, schedule.P_filt, k), k);
    const Matrix<Scalar> snr = srdkit::symmetrize(Matrix<Scalar>(info - inverse_spd(pred)));
    const Scalar floor = -rank_tol * max_eigenvalue(info);
    if (min_eigenvalue(snr) < floor)
      throw InconsistentSchedule("P_filt at step " + std::to_string(k + 1) +
                                 " exceeds the prediction covariance; no sensor achieves it");
    out.push_back(project_psd(snr));
  }
  return out;
}

/// SNR = C' V^{-1} C with V = I and C built from the eigenpairs above the rank threshold.
///
/// The threshold is rank_tol * max(lambda_max(SNR), scale); callers pass the information scale
/// lambda_max(P_{t|t}^{-1}) so that solver noise on an all-zero SNR does not count as rank.
template <typename Scalar>
SensorFactor<Scalar> factor_snr(const Matrix<Scalar>& snr, Scalar rank_tol = Scalar(default_rank_tol),
                                Scalar scale = Scalar(0)) {
  const Index n = snr.rows();
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(srdkit::symmetrize(snr));
  const Scalar lmax = n > 0 ? es.eigenvalues()(n - 1) : Scalar(0);
  const Scalar thresh = rank_tol * std::max(lmax, scale);
  std::vector<Index> keep;
  for (Index i = n - 1; i >= 0; --i)
    if (es.eigenvalues()(i) > thresh && es.eigenvalues()(i) > Scalar(0)) keep.push_back(i);
  SensorFactor<Scalar> f;
  f.rank = static_cast<Index>(keep.size());
  f.C.resize(f.rank, n);
  for (Index r = 0; r < f.rank; ++r) {
    const Index i = keep[static_cast<std::size_t>(r)];
    f.C.row(r) = std::sqrt(es.eigenvalues()(i)) * es.eigenvectors().col(i).transpose();
  }
  f.V = Matrix<Scalar>::Identity(f.rank, f.rank);
  return f;
}

/// P_{t|t-1} = A P_{t-1|t-1} A' + W and P_{t|t} = (P_{t|t-1}^{-1} + SNR_t)^{-1}, starting from P0.
///
/// A stationary model runs the recursion from the given stationary point `stationary_prior`
/// (or P0 when absent) for a single step.
template <typename Scalar>
std::pair<std::vector<Matrix<Scalar>>, std::vector<Matrix<Scalar>>> kalman_covariances(
    const GaussMarkovModel<Scalar>& model, const std::vector<Matrix<Scalar>>& snr,
    const Matrix<Scalar>* stationary_prior = nullptr) {
  model.validate();
  detail::check_steps(model, snr.size());
  std::vector<Matrix<Scalar>> pred, filt;
  Matrix<Scalar> prev = model.stationary && stationary_prior ? *stationary_prior : model.P0;
  for (std::size_t k = 0; k < snr.size(); ++k) {
    pred.push_back(detail::predict(model, prev, k));
    filt.push_back(inverse_spd(Matrix<Scalar>(inverse_spd(pred.back()) + snr[k])));
    prev = filt.back();
  }
  return {std::move(pred), std::move(filt)};
}

/// I(x_t; y_t | y^{t-1}) = 1/2 log det P_{t|t-1} - 1/2 log det P_{t|t} per step.
template <typename Scalar>
std::vector<Scalar> rate_per_step(const std::vector<Matrix<Scalar>>& p_pred, const std::vector<Matrix<Scalar>>& p_filt) {
  if (p_pred.size() != p_filt.size()) throw InvalidModel("prediction and filter covariance lists differ in length");
  std::vector<Scalar> out;
  for (std::size_t k = 0; k < p_pred.size(); ++k)
    out.push_back(Scalar(0.5) * (log_det_spd(p_pred[k]) - log_det_spd(p_filt[k])));
  return out;
}

/// Full synthesis: SNR, sensor factors, Kalman covariances and per-step rates.
template <typename Scalar>
SensorDesign<Scalar> synthesize(const GaussMarkovModel<Scalar>& model, const CovarianceSchedule<Scalar>& schedule,
                                Scalar rank_tol = Scalar(default_rank_tol)) {
  SensorDesign<Scalar> d;
  d.SNR = snr_from_schedule(schedule, model, rank_tol);
  for (std::size_t k = 0; k < d.SNR.size(); ++k) {
    auto f = factor_snr<Scalar>(d.SNR[k], rank_tol, max_eigenvalue(inverse_spd(schedule.P_filt[k])));
    d.SNR[k] = f.C.transpose() * f.C;
    d.C.push_back(std::move(f.C));
    d.V.push_back(std::move(f.V));
    d.ranks.push_back(f.rank);
  }
  const Matrix<Scalar>* prior = model.stationary ? &schedule.P_filt.front() : nullptr;
  std::tie(d.P_pred, d.P_filt) = kalman_covariances(model, d.SNR, prior);
  d.rate_per_step_nats = rate_per_step(d.P_pred, d.P_filt);
  return d;
}

template <typename Scalar>
std::vector<Index> sensor_dimension_profile(const SensorDesign<Scalar>& design) {
  return design.ranks;
}

}  // namespace srdkit
