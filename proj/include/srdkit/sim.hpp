#pragma once

// Monte Carlo check that a synthesized sensor and its Kalman filter achieve
// the predicted error covariances, plus Tustin discretization for presets.

#include "srdkit/linalg.hpp"
#include "srdkit/model.hpp"
#include "srdkit/synthesis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

namespace srdkit {

/// A_d = (I + A dt/2)(I - A dt/2)^{-1}.
template <typename Scalar>
Matrix<Scalar> tustin_discretize(const Matrix<Scalar>& a_cont, Scalar dt) {
  if (a_cont.rows() != a_cont.cols()) throw std::invalid_argument("tustin_discretize needs a square matrix");
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  const Index n = a_cont.rows();
  const Matrix<Scalar> I = Matrix<Scalar>::Identity(n, n);
  const Matrix<Scalar> half = a_cont * (dt / Scalar(2));
  Eigen::FullPivLU<Matrix<Scalar>> lu(I - half);
  if (!lu.isInvertible() || lu.rcond() < Scalar(1e-13))
    throw std::domain_error("tustin_discretize: I - A dt/2 is singular (dt hits the bilinear pole)");
  // X (I - H) = (I + H)  <=>  (I - H)' X' = (I + H)'
  Eigen::FullPivLU<Matrix<Scalar>> lut(Matrix<Scalar>((I - half).transpose()));
  return lut.solve(Matrix<Scalar>((I + half).transpose())).transpose();
}

template <typename Scalar>
struct SimulationReport {
  std::vector<Matrix<Scalar>> empirical_err_cov;
  std::vector<Matrix<Scalar>> predicted;
  std::vector<Scalar> distortion_series;     // Tr(Theta_t * empirical_t)
  std::vector<Scalar> predicted_distortion;  // Tr(Theta_t * P_{t|t})
  std::vector<Scalar> distortion_stderr;
  Scalar max_rel_deviation = Scalar(0);  // max_t ||empirical - P||_F / ||P||_F
  Scalar max_entry_zscore = Scalar(0);   // max_t,i,j |empirical_ij - P_ij| / se_ij
  std::int64_t paths = 0;
  std::uint64_t seed = 0;
};

struct SimulationOptions {
  std::int64_t paths = 100000;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path) {
  return splitmix64(splitmix64(seed) ^ splitmix64(path + 0x632be59bd9b4e019ULL));
}

inline constexpr std::int64_t sim_chunk = 1024;

}  // namespace detail

/// Samples the source, the sensor y_t = C_t x_t + v_t and the covariance-form Kalman filter.
///
/// Paths are grouped in fixed chunks with one RNG stream per path; chunk sums are reduced in
/// chunk order, so the report is identical for any number of worker threads.
template <typename Scalar>
SimulationReport<Scalar> simulate(const GaussMarkovModel<Scalar>& model, const SensorDesign<Scalar>& design,
                                  const SimulationOptions& opt, const std::vector<Matrix<Scalar>>& theta = {}) {
  model.validate();
  if (model.stationary) throw InvalidModel("simulate needs a finite-horizon model; expand the stationary design first");
  if (opt.paths < 1) throw std::invalid_argument("number of paths must be at least 1");
  const std::size_t T = static_cast<std::size_t>(model.horizon);
  const Index n = model.dim();
  if (design.C.size() != T || design.V.size() != T || design.P_pred.size() != T || design.P_filt.size() != T)
    throw InvalidModel("design does not cover the model horizon");
  if (!theta.empty() && theta.size() != 1 && theta.size() != T) throw InvalidModel("expected 1 or T Theta matrices");

  std::vector<Matrix<Scalar>> A(T), LW(T), LV(T), K(T), C(T);
  for (std::size_t k = 0; k < T; ++k) {
    A[k] = model.A_at(static_cast<int>(k));
    LW[k] = Eigen::LLT<Matrix<Scalar>>(model.W_at(static_cast<int>(k))).matrixL();
    C[k] = design.C[k];
    if (C[k].rows() > 0) {
      if (C[k].cols() != n) throw InvalidModel("C_t has the wrong number of columns");
      Eigen::LLT<Matrix<Scalar>> lv(design.V[k]);
      if (lv.info() != Eigen::Success) throw InvalidModel("V_t must be positive definite");
      LV[k] = lv.matrixL();
      const Matrix<Scalar> S = srdkit::symmetrize(Matrix<Scalar>(C[k] * design.P_pred[k] * C[k].transpose() + design.V[k]));
      K[k] = Eigen::LLT<Matrix<Scalar>>(S).solve(C[k] * design.P_pred[k]).transpose();
    }
  }
  const Matrix<Scalar> L0 = Eigen::LLT<Matrix<Scalar>>(model.P0).matrixL();

  const std::int64_t chunks = (opt.paths + detail::sim_chunk - 1) / detail::sim_chunk;
  std::vector<std::vector<Matrix<Scalar>>> partial(static_cast<std::size_t>(chunks));
  std::atomic<std::int64_t> next{0};

  auto worker = [&] {
    Vector<Scalar> x(n), z(n), e(n), noise;
    for (std::int64_t c = next++; c < chunks; c = next++) {
      auto& acc = partial[static_cast<std::size_t>(c)];
      acc.assign(T, Matrix<Scalar>::Zero(n, n));
      const std::int64_t end = std::min(opt.paths, (c + 1) * detail::sim_chunk);
      for (std::int64_t path = c * detail::sim_chunk; path < end; ++path) {
        std::mt19937_64 rng(detail::path_seed(opt.seed, static_cast<std::uint64_t>(path)));
        std::normal_distribution<Scalar> normal;
        auto draw = [&](Index m) {
          noise.resize(m);
          for (Index i = 0; i < m; ++i) noise(i) = normal(rng);
          return noise;
        };
        x = L0 * draw(n);
        z.setZero();
        for (std::size_t k = 0; k < T; ++k) {
          x = A[k] * x + LW[k] * draw(n);
          z = A[k] * z;
          if (C[k].rows() > 0) {
            const Vector<Scalar> y = C[k] * x + LV[k] * draw(C[k].rows());
            z += K[k] * (y - C[k] * z);
          }
          e = x - z;
          acc[k].noalias() += e * e.transpose();
        }
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(chunks)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SimulationReport<Scalar> rep;
  rep.paths = opt.paths;
  rep.seed = opt.seed;
  const Scalar N = static_cast<Scalar>(opt.paths);
  for (std::size_t k = 0; k < T; ++k) {
    Matrix<Scalar> sum = Matrix<Scalar>::Zero(n, n);
    for (const auto& chunk : partial) sum += chunk[k];
    const Matrix<Scalar> emp = srdkit::symmetrize(Matrix<Scalar>(sum / N));
    const Matrix<Scalar>& P = design.P_filt[k];
    const Matrix<Scalar> th = theta.empty() ? Matrix<Scalar>::Identity(n, n) : theta.size() == 1 ? theta[0] : theta[k];
    rep.empirical_err_cov.push_back(emp);
    rep.predicted.push_back(P);
    rep.distortion_series.push_back((th * emp).trace());
    rep.predicted_distortion.push_back((th * P).trace());
    const Matrix<Scalar> tp = th * P;
    rep.distortion_stderr.push_back(std::sqrt(Scalar(2) * (tp * tp).trace() / N));
    rep.max_rel_deviation = std::max(rep.max_rel_deviation, Scalar((emp - P).norm() / P.norm()));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j <= i; ++j) {
        const Scalar se = std::sqrt((P(i, i) * P(j, j) + P(i, j) * P(i, j)) / N);
        rep.max_entry_zscore = std::max(rep.max_entry_zscore, Scalar(std::abs(emp(i, j) - P(i, j)) / se));
      }
  }
  return rep;
}

/// Repeats a stationary model and its one-step design over `steps` steps, starting in steady state.
template <typename Scalar>
std::pair<GaussMarkovModel<Scalar>, SensorDesign<Scalar>> expand_stationary(const GaussMarkovModel<Scalar>& model,
                                                                            const SensorDesign<Scalar>& design,
                                                                            int steps) {
  if (!model.stationary) throw InvalidModel("expand_stationary needs a stationary model");
  if (steps < 1) throw InvalidModel("steps must be positive");
  auto m = GaussMarkovModel<Scalar>::time_invariant(model.A.front(), model.W.front(), design.P_filt.front(), steps);
  SensorDesign<Scalar> d;
  for (int t = 0; t < steps; ++t) {
    d.SNR.push_back(design.SNR.front());
    d.C.push_back(design.C.front());
    d.V.push_back(design.V.front());
    d.ranks.push_back(design.ranks.front());
    d.P_pred.push_back(design.P_pred.front());
    d.P_filt.push_back(design.P_filt.front());
    d.rate_per_step_nats.push_back(design.rate_per_step_nats.front());
  }
  return {std::move(m), std::move(d)};
}

}  // namespace srdkit
