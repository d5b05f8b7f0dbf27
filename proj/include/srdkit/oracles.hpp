#pragma once

// Closed-form and brute-force reference values for the SRD pipeline. Nothing
// here touches the max-det solver.

#include "srdkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace srdkit::oracles {

/// R_SRD(D) = max{0, 1/2 log(a^2 + w/D)} for x_{t+1} = a x_t + w_t.
template <typename Scalar>
Scalar scalar_stationary_srd(Scalar a, Scalar w, Scalar D) {
  if (!(w > 0) || !(D > 0)) throw std::invalid_argument("scalar_stationary_srd needs w > 0 and D > 0");
  return std::max(Scalar(0), Scalar(0.5) * std::log(a * a + w / D));
}

/// R(D) = max{0, 1/2 log(1/D)} for a unit-variance Gaussian source.
template <typename Scalar>
Scalar scalar_memoryless_rd(Scalar D) {
  if (!(D > 0)) throw std::invalid_argument("scalar_memoryless_rd needs D > 0");
  return std::max(Scalar(0), Scalar(0.5) * std::log(Scalar(1) / D));
}

/// SNR = max{0, 1/D - 1} of the optimal sensor for a unit-variance source.
template <typename Scalar>
Scalar scalar_snr_for_distortion(Scalar D) {
  if (!(D > 0)) throw std::invalid_argument("scalar_snr_for_distortion needs D > 0");
  return std::max(Scalar(0), Scalar(1) / D - Scalar(1));
}

template <typename Scalar>
struct WaterfillResult {
  std::vector<Scalar> levels;
  Scalar water_level = Scalar(0);
  Scalar rate_nats = Scalar(0);
  Scalar distortion = Scalar(0);
};

namespace detail {

template <typename Scalar>
WaterfillResult<Scalar> fill(const std::vector<Scalar>& sigma2, Scalar level) {
  WaterfillResult<Scalar> r;
  r.water_level = level;
  for (Scalar s : sigma2) {
    if (s < 0) throw std::invalid_argument("variances must be nonnegative");
    const Scalar p = std::min(level, s);
    r.levels.push_back(p);
    r.distortion += p;
    if (p > 0) r.rate_nats += Scalar(0.5) * std::log(s / p);
  }
  return r;
}

}  // namespace detail

/// p_i = min(1/alpha, sigma_i^2).
template <typename Scalar>
WaterfillResult<Scalar> reverse_waterfill_soft(const std::vector<Scalar>& sigma2, Scalar alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  return detail::fill(sigma2, Scalar(1) / alpha);
}

/// Water level lambda with sum_i min(lambda, sigma_i^2) = min(D, sum_i sigma_i^2), found by a breakpoint scan.
template <typename Scalar>
WaterfillResult<Scalar> reverse_waterfill_hard(const std::vector<Scalar>& sigma2, Scalar D) {
  if (!(D > 0)) throw std::invalid_argument("D must be positive");
  if (sigma2.empty()) return {};
  std::vector<Scalar> sorted = sigma2;
  std::sort(sorted.begin(), sorted.end());
  const Scalar total = std::accumulate(sorted.begin(), sorted.end(), Scalar(0));
  if (D >= total) return detail::fill(sigma2, sorted.back());
  // With the k smallest variances fully retained, the rest share the remaining budget equally.
  Scalar below = 0;
  const std::size_t n = sorted.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Scalar level = (D - below) / static_cast<Scalar>(n - k);
    if (level <= sorted[k]) return detail::fill(sigma2, level);
    below += sorted[k];
  }
  return detail::fill(sigma2, sorted.back());
}

/// Raised when no grid point meets every distortion bound.
class NoFeasiblePoint : public std::runtime_error {
 public:
  explicit NoFeasiblePoint(const std::string& what) : std::runtime_error(what) {}
};

template <typename Scalar>
struct GridOracleResult {
  Scalar rate_nats = Scalar(0);
  std::vector<Scalar> snr;      // minimizing grid point
  Scalar grid_step = Scalar(0);
  Scalar snr_max = Scalar(0);
  Scalar error_bound = Scalar(0);  // grid optimum minus continuous optimum is at most this
  std::size_t evaluated = 0;
};

namespace detail {

template <typename Scalar>
struct GridSearch {
  const GaussMarkovModel<Scalar>& model;
  const DistortionSpec<Scalar>& spec;
  Scalar step, snr_max;
  int T;
  std::vector<Scalar> current, best_snr;
  Scalar best = std::numeric_limits<Scalar>::infinity();
  std::size_t evaluated = 0;

  Scalar a(int t) const { return model.A_at(t)(0, 0); }
  Scalar w(int t) const { return model.W_at(t)(0, 0); }
  Scalar bound(int t) const { return spec.value_at(t) / spec.theta_at(t)(0, 0); }

  // Stage k has prior filtered variance p_prev and accumulated rate `rate`.
  void visit(int k, Scalar p_prev, Scalar rate) {
    const Scalar pp = a(k) * a(k) * p_prev + w(k);
    const Scalar th = spec.theta_at(k)(0, 0);
    const bool constrained = th > 0;
    auto stage = [&](Scalar snr) {
      const Scalar pf = Scalar(1) / (Scalar(1) / pp + snr);
      return std::pair{pf, rate + Scalar(0.5) * std::log1p(pp * snr)};
    };
    if (k == T - 1) {
      // Rate grows and distortion shrinks with snr, so the smallest feasible grid point wins.
      Scalar snr = 0;
      if (constrained && pp > bound(k)) {
        const Scalar need = Scalar(1) / bound(k) - Scalar(1) / pp;
        snr = std::ceil(need / step * (Scalar(1) - Scalar(1e-14))) * step;
        if (Scalar(1) / (Scalar(1) / pp + snr) > bound(k) * (Scalar(1) + Scalar(1e-12))) snr += step;
      }
      ++evaluated;
      if (snr > snr_max * (Scalar(1) + Scalar(1e-12))) return;
      const Scalar total = stage(snr).second;
      if (total < best) {
        best = total;
        current[static_cast<std::size_t>(k)] = snr;
        best_snr = current;
      }
      return;
    }
    const auto count = static_cast<long long>(std::floor(snr_max / step + Scalar(1e-9)));
    for (long long i = 0; i <= count; ++i) {
      const Scalar snr = static_cast<Scalar>(i) * step;
      const auto [pf, r] = stage(snr);
      ++evaluated;
      if (r >= best) break;
      if (constrained && pf > bound(k) * (Scalar(1) + Scalar(1e-12))) continue;
      current[static_cast<std::size_t>(k)] = snr;
      visit(k + 1, pf, r);
    }
  }
};

}  // namespace detail

/// Exhaustive search over snr_t in {0, step, 2 step, ..., snr_max}^T for a scalar model, T <= 3.
///
/// The last coordinate is resolved in closed form (the smallest feasible grid value is optimal
/// for a fixed prefix) and prefixes whose partial rate already exceeds the incumbent are cut.
/// Both shortcuts return exactly the grid optimum.
template <typename Scalar>
GridOracleResult<Scalar> grid_oracle(const GaussMarkovModel<Scalar>& model, const DistortionSpec<Scalar>& spec,
                                     Scalar step = Scalar(1e-3)) {
  model.validate();
  if (model.stationary || model.dim() != 1 || model.horizon > 3)
    throw std::invalid_argument("grid_oracle needs a scalar finite-horizon model with T <= 3");
  if (spec.mode != ConstraintMode::Hard) throw std::invalid_argument("grid_oracle needs hard distortion bounds");
  if (!(step > 0)) throw std::invalid_argument("grid step must be positive");
  const int T = model.horizon;
  spec.validate(1, T);
  Scalar dmin = std::numeric_limits<Scalar>::infinity();
  for (int t = 0; t < T; ++t) dmin = std::min(dmin, spec.value_at(t));

  detail::GridSearch<Scalar> s{model, spec, step, Scalar(10) / dmin, T, std::vector<Scalar>(static_cast<std::size_t>(T)), {}};
  s.visit(0, model.P0(0, 0), Scalar(0));
  if (!std::isfinite(s.best))
    throw NoFeasiblePoint("no grid point with snr <= " + std::to_string(s.snr_max) + " meets every distortion bound");

  // Free-recursion prediction variances bound every reachable prediction variance.
  Scalar p = model.P0(0, 0), ppmax = 0;
  for (int t = 0; t < T; ++t) {
    p = s.a(t) * s.a(t) * p + s.w(t);
    ppmax = std::max(ppmax, p);
  }
  GridOracleResult<Scalar> r;
  r.rate_nats = s.best;
  r.snr = s.best_snr;
  r.grid_step = step;
  r.snr_max = s.snr_max;
  r.error_bound = Scalar(0.5) * static_cast<Scalar>(T) * ppmax * step;
  r.evaluated = s.evaluated;
  return r;
}

}  // namespace srdkit::oracles
