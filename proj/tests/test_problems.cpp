#include "srdkit/oracles.hpp"
#include "srdkit/problems.hpp"
#include "srdkit/synthesis.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace srdkit;

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

GaussMarkovModel<double> scalar_model(double a, double w, double p0, int T) {
  return GaussMarkovModel<double>::time_invariant(scalar(a), scalar(w), scalar(p0), T);
}

MatrixXd random_spd(Index n, std::mt19937_64& rng, double shift) {
  std::normal_distribution<double> g;
  MatrixXd b(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) b(i, j) = g(rng);
  return b * b.transpose() / static_cast<double>(n) + shift * MatrixXd::Identity(n, n);
}

MatrixXd random_matrix(Index n, std::mt19937_64& rng, double radius) {
  std::normal_distribution<double> g;
  MatrixXd a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = g(rng);
  Eigen::EigenSolver<MatrixXd> es(a, false);
  return a * (radius / es.eigenvalues().cwiseAbs().maxCoeff());
}

// Pre-rewrite objective: sum_t 1/2 log det(A P_{t-1} A' + W) - 1/2 log det P_t.
double direct_rate(const GaussMarkovModel<double>& m, const CovarianceSchedule<double>& s) {
  double r = 0;
  for (int t = 0; t < m.horizon; ++t) {
    const MatrixXd& prev = t == 0 ? m.P0 : s.P_filt[static_cast<std::size_t>(t - 1)];
    const MatrixXd pred = m.A_at(t) * prev * m.A_at(t).transpose() + m.W_at(t);
    r += 0.5 * (log_det_spd(pred) - log_det_spd(s.P_filt[static_cast<std::size_t>(t)]));
  }
  return r;
}

struct TestInstance {
  GaussMarkovModel<double> model;
  DistortionSpec<double> spec;
};

TestInstance random_instance(unsigned seed, Index n, int T) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.3, 1.5);
  auto model = GaussMarkovModel<double>::time_invariant(random_matrix(n, rng, 1.05), random_spd(n, rng, 0.2),
                                                        random_spd(n, rng, 0.5), T);
  std::vector<double> d;
  for (int t = 0; t < T; ++t) d.push_back(u(rng) * static_cast<double>(n));
  return {model, DistortionSpec<double>::hard({random_spd(n, rng, 0.1)}, d)};
}

}  // namespace

TEST(ObjectiveConstant, Examples) {
  EXPECT_NEAR(objective_constant(scalar_model(1, 1, 1, 2)), 0.5 * std::log(2.0), 1e-15);
  auto one = GaussMarkovModel<double>::time_invariant(scalar(2.0), scalar(3.0), scalar(0.5), 1);
  EXPECT_NEAR(objective_constant(one), 0.5 * std::log(4.0 * 0.5 + 3.0), 1e-15);
  const MatrixXd i2 = MatrixXd::Identity(2, 2);
  EXPECT_NEAR(objective_constant(GaussMarkovModel<double>::time_invariant(i2, i2, i2, 3)), std::log(2.0), 1e-15);
}

TEST(FiniteHard, SingleStageMatchesWaterfilling) {
  const auto oracle = oracles::reverse_waterfill_hard<double>({2.0}, 0.5);
  const auto r = solve_schedule(scalar_model(1, 1, 1, 1), DistortionSpec<double>::hard({scalar(1.0)}, {0.5}));
  ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
  EXPECT_NEAR(r.schedule.P_filt[0](0, 0), oracle.levels[0], 1e-7);
  EXPECT_NEAR(r.schedule.rate_nats, oracle.rate_nats, 1e-7);
  EXPECT_NEAR(oracle.rate_nats, 0.5 * std::log(4.0), 1e-15);
}

TEST(FiniteHard, HugeBoundsNeedNoInformation) {
  const auto model = scalar_model(1.1, 1, 1, 4);
  const auto r = solve_schedule(model, DistortionSpec<double>::hard({scalar(1.0)}, {1e3}));
  ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
  EXPECT_NEAR(r.schedule.rate_nats, 0.0, 1e-7);
  for (Index rank : synthesize(model, r.schedule).ranks) EXPECT_EQ(rank, 0);
}

TEST(FiniteHard, TwoStageMatchesGridOracle) {
  const auto model = scalar_model(1, 1, 1, 2);
  const auto spec = DistortionSpec<double>::hard({scalar(1.0)}, {0.5, 0.5});
  const auto grid = oracles::grid_oracle(model, spec, 1e-5);
  const auto r = solve_schedule(model, spec);
  ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
  EXPECT_NEAR(r.schedule.rate_nats, grid.rate_nats, 1e-4);
  EXPECT_LE(r.schedule.rate_nats, grid.rate_nats + 1e-7);
}

TEST(FiniteHard, ConstraintsHoldAfterDecoding) {
  const auto inst = random_instance(17, 3, 5);
  const auto r = solve_schedule(inst.model, inst.spec);
  ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
  const auto& s = r.schedule;
  for (int t = 0; t < inst.model.horizon; ++t) {
    const auto k = static_cast<std::size_t>(t);
    const MatrixXd& prev = t == 0 ? inst.model.P0 : s.P_filt[k - 1];
    const MatrixXd pred = inst.model.A_at(t) * prev * inst.model.A_at(t).transpose() + inst.model.W_at(t);
    const double scale = 1 + pred.norm();
    EXPECT_GE(min_eigenvalue(pred - s.P_filt[k]), -1e-7 * scale);
    EXPECT_GT(min_eigenvalue(s.Pi[k]), 0.0);
    EXPECT_LE((inst.spec.theta_at(t) * s.P_filt[k]).trace(), inst.spec.value_at(t) * (1 + 1e-7));
    if (t + 1 < inst.model.horizon) {
      const auto& a = inst.model.A_at(t + 1);
      const Index n = a.rows();
      MatrixXd lmi(2 * n, 2 * n);
      lmi << s.P_filt[k] - s.Pi[k], s.P_filt[k] * a.transpose(), a * s.P_filt[k],
          a * s.P_filt[k] * a.transpose() + inst.model.W_at(t + 1);
      EXPECT_GE(min_eigenvalue(lmi), -1e-7 * (1 + lmi.norm()));
    } else {
      EXPECT_LT((s.Pi[k] - s.P_filt[k]).norm(), 1e-12);
    }
  }
}

TEST(FiniteHard, RewriteMatchesDirectObjective) {
  for (unsigned seed : {1u, 2u, 3u}) {
    const auto inst = random_instance(seed, 2 + seed % 2, 4);
    const auto r = solve_schedule(inst.model, inst.spec);
    ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
    const double direct = direct_rate(inst.model, r.schedule);
    EXPECT_NEAR(r.schedule.rate_nats, direct, 1e-6 * std::max(1.0, std::abs(direct))) << "seed " << seed;
    EXPECT_NEAR(r.schedule.objective_nats + r.schedule.constant_c, r.schedule.rate_nats, 1e-12);
  }
}

TEST(FiniteHard, RateIsNonincreasingInEachBound) {
  const auto inst = random_instance(5, 2, 3);
  const double base = solve_schedule(inst.model, inst.spec).schedule.rate_nats;
  for (std::size_t t = 0; t < 3; ++t) {
    auto looser = inst.spec;
    looser.values[t] *= 1.3;
    EXPECT_LE(solve_schedule(inst.model, looser).schedule.rate_nats, base + 1e-7) << "t=" << t;
  }
}

TEST(FiniteHard, ConvergesToStationaryRate) {
  const double a = 0.9, w = 1.0, D = 0.5;
  const double stationary = oracles::scalar_stationary_srd(a, w, D);
  const auto spec = DistortionSpec<double>::hard({scalar(1.0)}, {D});
  // Starting in steady state every stage costs the stationary rate.
  const auto steady = solve_schedule(scalar_model(a, w, D, 50), spec);
  ASSERT_EQ(steady.solution.status, maxdet::SolverStatus::Optimal);
  EXPECT_NEAR(steady.schedule.rate_nats / 50.0, stationary, 1e-7);
  // Otherwise the excess over T stationary stages is a fixed start-up cost, so the gap decays like 1/T.
  std::vector<double> excess;
  for (int T : {50, 100, 200}) {
    const auto r = solve_schedule(scalar_model(a, w, 1.0, T), spec);
    ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
    excess.push_back(r.schedule.rate_nats - T * stationary);
  }
  EXPECT_GT(excess[0], 0.0);
  EXPECT_NEAR(excess[1], excess[0], 1e-5);
  EXPECT_NEAR(excess[2], excess[0], 1e-5);
}

TEST(FiniteHard, LagrangeMultipliersReproduceScheduleInSoftMode) {
  const auto inst = random_instance(8, 2, 4);
  const auto hard = solve_schedule(inst.model, inst.spec);
  ASSERT_EQ(hard.solution.status, maxdet::SolverStatus::Optimal);
  const auto alpha = distortion_multipliers(hard.srd, hard.solution);
  const auto soft = solve_schedule(inst.model, DistortionSpec<double>::soft(inst.spec.Theta, alpha));
  ASSERT_EQ(soft.solution.status, maxdet::SolverStatus::Optimal);
  for (std::size_t k = 0; k < alpha.size(); ++k)
    EXPECT_LT((soft.schedule.P_filt[k] - hard.schedule.P_filt[k]).norm(), 1e-5 * (1 + hard.schedule.P_filt[k].norm()));
}

TEST(FiniteHard, HintIsStrictlyFeasible) {
  const auto inst = random_instance(4, 3, 6);
  const auto srd = build_finite_hard(inst.model, inst.spec);
  ASSERT_TRUE(srd.problem.hint.has_value());
  EXPECT_LT((srd.problem.eq_map.apply(*srd.problem.hint) - srd.problem.rhs).norm(), 1e-10);
  EXPECT_TRUE(maxdet::detail::all_positive_definite(*srd.problem.hint));
  EXPECT_TRUE(srd.problem.time_chained);
}

TEST(FiniteHard, RejectsBadInput) {
  const auto model = scalar_model(1, 1, 1, 2);
  EXPECT_THROW(build_finite_hard(model, DistortionSpec<double>::hard({scalar(1.0)}, {0.5, -1.0})), InvalidModel);
  EXPECT_THROW(build_finite_hard(model, DistortionSpec<double>::hard({scalar(1.0)}, {0.5, 0.5, 0.5})), InvalidModel);
  EXPECT_THROW(build_finite_hard(model, DistortionSpec<double>::hard({MatrixXd::Identity(2, 2)}, {0.5})), InvalidModel);
  EXPECT_THROW(build_finite_hard(model, DistortionSpec<double>::soft({scalar(1.0)}, {0.5})), InvalidModel);
  EXPECT_THROW(build_finite_hard(scalar_model(1, -1, 1, 2), DistortionSpec<double>::hard({scalar(1.0)}, {0.5})),
               InvalidModel);
  EXPECT_THROW(build_finite_hard(scalar_model(1, 1, 0, 2), DistortionSpec<double>::hard({scalar(1.0)}, {0.5})),
               InvalidModel);
}

TEST(FiniteSoft, VanishingPriceFollowsFreeRecursion) {
  const auto model = scalar_model(1.1, 1.0, 1.0, 3);
  const auto r = solve_schedule(model, DistortionSpec<double>::soft({scalar(1.0)}, {1e-8}));
  ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
  double p = 1.0;
  for (std::size_t k = 0; k < 3; ++k) {
    p = 1.21 * p + 1.0;
    EXPECT_NEAR(r.schedule.P_filt[k](0, 0), p, 1e-5 * p);
  }
  EXPECT_NEAR(r.schedule.rate_nats, 0.0, 1e-6);
}

TEST(FiniteSoft, ScalarSingleStage) {
  // sigma^2 = a^2 p0 + w = 2, alpha = 1 -> p = min(1, 2) = 1.
  const auto oracle = oracles::reverse_waterfill_soft<double>({2.0}, 1.0);
  const auto r = solve_schedule(scalar_model(1, 1, 1, 1), DistortionSpec<double>::soft({scalar(1.0)}, {1.0}));
  ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
  EXPECT_NEAR(r.schedule.P_filt[0](0, 0), oracle.levels[0], 1e-7);
  EXPECT_NEAR(r.schedule.rate_nats, 0.5 * std::log(2.0), 1e-7);
}

TEST(FiniteSoft, SingleStageReverseWaterfilling) {
  std::mt19937_64 rng(31);
  const Index n = 4;
  const MatrixXd a = random_matrix(n, rng, 0.9);
  const MatrixXd w = random_spd(n, rng, 0.1);
  const MatrixXd p0 = random_spd(n, rng, 0.3);
  const MatrixXd sigma = symmetrize(MatrixXd(a * p0 * a.transpose() + w));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  const double alpha = 2.0 / es.eigenvalues()(n / 2);
  const auto r = solve_schedule(GaussMarkovModel<double>::time_invariant(a, w, p0, 1),
                                DistortionSpec<double>::soft({MatrixXd::Identity(n, n)}, {alpha}));
  ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
  std::vector<double> s2(es.eigenvalues().data(), es.eigenvalues().data() + n);
  const auto oracle = oracles::reverse_waterfill_soft(s2, alpha);
  const MatrixXd in_basis = es.eigenvectors().transpose() * r.schedule.P_filt[0] * es.eigenvectors();
  for (Index i = 0; i < n; ++i) EXPECT_NEAR(in_basis(i, i), oracle.levels[static_cast<std::size_t>(i)], 1e-6);
  EXPECT_LT((in_basis - MatrixXd(in_basis.diagonal().asDiagonal())).norm(), 1e-6);
}

TEST(Stationary, ScalarExamples) {
  const auto r = solve_stationary<double>(scalar(1.0), scalar(1.0), scalar(1.0), 1.0);
  ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
  EXPECT_NEAR(r.schedule.rate_nats, 0.5 * std::log(2.0), 1e-7);
  // |a| < 1 and D >= w / (1 - a^2): the free stationary variance already meets the bound.
  const auto z = solve_stationary<double>(scalar(0.5), scalar(1.0), scalar(1.0), 1.0 / 0.75 * 1.01);
  ASSERT_EQ(z.solution.status, maxdet::SolverStatus::Optimal);
  EXPECT_NEAR(z.schedule.rate_nats, 0.0, 1e-7);
}

TEST(Stationary, MatchesScalarClosedForm) {
  for (double a : {0.0, 0.7, 1.3})
    for (double D : {0.1, 0.6, 3.0}) {
      const auto r = solve_stationary<double>(scalar(a), scalar(0.8), scalar(1.0), D);
      ASSERT_EQ(r.solution.status, maxdet::SolverStatus::Optimal);
      EXPECT_NEAR(r.schedule.rate_nats, oracles::scalar_stationary_srd(a, 0.8, D), 1e-6) << "a=" << a << " D=" << D;
    }
}

TEST(Stationary, DetectabilityIsEnforced) {
  MatrixXd a = MatrixXd::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 0.5;
  MatrixXd hidden = MatrixXd::Zero(2, 2);
  hidden(1, 1) = 1.0;
  MatrixXd seen = MatrixXd::Zero(2, 2);
  seen(0, 0) = 1.0;
  EXPECT_FALSE(is_detectable<double>(a, hidden));
  EXPECT_TRUE(is_detectable<double>(a, seen));
  EXPECT_THROW(build_stationary<double>(a, MatrixXd::Identity(2, 2), hidden, 1.0), InvalidModel);
  EXPECT_NO_THROW(build_stationary<double>(a, MatrixXd::Identity(2, 2), seen, 1.0));
}

TEST(Stationary, RejectsBadInput) {
  EXPECT_THROW(build_stationary<double>(scalar(1.0), scalar(1.0), scalar(1.0), 0.0), InvalidModel);
  EXPECT_THROW(build_stationary<double>(scalar(1.0), scalar(0.0), scalar(1.0), 1.0), InvalidModel);
  EXPECT_THROW(build_stationary<double>(scalar(1.0), scalar(1.0), scalar(-1.0), 1.0), InvalidModel);
}
