#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cmab/estimation.hpp"
#include "cmab/lp.hpp"
#include "cmab/omd.hpp"

using namespace cmab;

namespace {

SafeSpaceSpec simplex_space(std::size_t k, double lower) {
  SafeSpaceSpec s;
  s.dim = k;
  s.lower_bound = lower;
  return s;
}

SafeSpaceSpec one_row_space(Vector g, double bound, double lower) {
  SafeSpaceSpec s = simplex_space(g.size(), lower);
  s.coeffs.push_back(std::move(g));
  s.bounds.push_back(bound);
  return s;
}

// Closed-form unconstrained log-barrier OMD step: 1/x(a) = 1/y(a) + eta_a (lhat(a) + nu),
// with nu found by bisection so that the coordinates sum to one.
Vector unconstrained_step(const Vector& lhat, const Vector& y, const Vector& eta) {
  auto point = [&](double nu) {
    Vector x(y.size());
    for (std::size_t a = 0; a < y.size(); ++a) x[a] = 1.0 / (1.0 / y[a] + eta[a] * (lhat[a] + nu));
    return x;
  };
  double lo = -1e9;
  for (std::size_t a = 0; a < y.size(); ++a) lo = std::max(lo, -lhat[a] - 1.0 / (y[a] * eta[a]));
  lo += 1e-15;
  double hi = 1e9;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    const Vector x = point(mid);
    double s = 0.0;
    bool pos = true;
    for (double v : x) {
      s += v;
      pos = pos && v > 0.0;
    }
    if (!pos || s > 1.0) lo = mid; else hi = mid;
  }
  return point(hi);
}

}  // namespace

TEST(LogBarrier, Examples) {
  const LrSchedule s = LrSchedule::initial(2, 100, 1.0);
  EXPECT_NEAR(log_barrier_value(Strategy::uniform(2), s), 2.0 * std::log(2.0), 1e-15);
  EXPECT_GT(log_barrier_value(Strategy(Vector{1e-6, 1.0 - 1e-6}), s), 13.0);
  EXPECT_THROW(log_barrier_value(Strategy::vertex(2, 0), s), ValidationError);
}

TEST(Bregman, Examples) {
  const Vector eta{1.0, 1.0};
  const Strategy x = Strategy::uniform(2);
  const Strategy y(Vector{0.25, 0.75});
  const double expect = (2.0 - 1.0 - std::log(2.0)) + (2.0 / 3.0 - 1.0 - std::log(2.0 / 3.0));
  EXPECT_NEAR(bregman(x, y, eta), expect, 1e-15);
  EXPECT_NEAR(bregman(x, y, eta), 0.3790, 1e-4);
  EXPECT_EQ(bregman(x, x, eta), 0.0);
  EXPECT_THROW(bregman(Strategy::vertex(2, 0), y, eta), ValidationError);
}

TEST(Bregman, NonNegativeOnRandomPairs) {
  Rng rng(4);
  for (int n = 0; n < 1000; ++n) {
    const double a = 0.001 + 0.998 * uniform01(rng);
    const double b = 0.001 + 0.998 * uniform01(rng);
    EXPECT_GE(bregman(Strategy(Vector{a, 1 - a}), Strategy(Vector{b, 1 - b}), Vector{0.3, 2.0}), 0.0);
  }
}

TEST(LrUpdate, Examples) {
  const std::size_t K = 3;
  LrSchedule s = LrSchedule::initial(K, 1000, 0.1);
  const Strategy x(Vector{1.0 / (3.0 * K), 0.5, 1.0 - 0.5 - 1.0 / (3.0 * K)});
  const LrSchedule u = lr_update(x, s);
  EXPECT_NEAR(u.thresholds[0], 6.0 * K, 1e-12);
  EXPECT_NEAR(u.eta[0], 0.1 * increase_factor(1000.0), 1e-15);
  EXPECT_EQ(u.eta[1], 0.1);
  EXPECT_EQ(u.thresholds[1], 2.0 * K);
  EXPECT_EQ(u.increases[0], 1);
}

TEST(LrUpdate, IncreaseFactor) {
  EXPECT_NEAR(increase_factor(std::exp(2.0)), std::exp(0.5), 1e-12);
  EXPECT_NEAR(increase_factor(std::exp(2.0)), 1.64872, 1e-5);
}

// Thresholds at least double on each increase, so for x >= 1/T at most
// about log2(T/K) + 1 increases happen and the cap stays below 5.
TEST(LrUpdate, CapOnAdversarialSequence) {
  for (std::size_t T : {100u, 1000u, 100000u}) {
    LrSchedule s = LrSchedule::initial(2, T, 1.0);
    for (double p = 0.25; p >= 1.0 / T; p *= 0.7) s = lr_update(Strategy(Vector{p, 1 - p}), s);
    s = lr_update(Strategy(Vector{1.0 / T, 1 - 1.0 / T}), s);
    EXPECT_LE(s.max_ratio(), 5.0);
  }
}

TEST(OmdStep, ZeroLossKeepsTheIterate) {
  const LrSchedule s = LrSchedule::initial(3, 100, 0.5);
  const Strategy y(Vector{0.2, 0.3, 0.5});
  const OmdResult r = omd_step(Vector{0.0, 0.0, 0.0}, y, s, simplex_space(3, 0.01));
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(r.point[a], y[a], 1e-12);
}

TEST(OmdStep, MatchesClosedFormWhenUnconstrained) {
  Rng rng(5);
  for (int n = 0; n < 50; ++n) {
    const std::size_t k = 2 + n % 4;
    Vector y(k);
    double sum = 0.0;
    for (double& v : y) sum += (v = 0.2 + uniform01(rng));
    for (double& v : y) v /= sum;
    Vector lhat(k, 0.0);
    lhat[n % k] = 0.5 / y[n % k];
    LrSchedule s = LrSchedule::initial(k, 10000, 0.01 + uniform01(rng));
    const OmdResult r = omd_step(lhat, Strategy(y), s, simplex_space(k, 1e-4));
    const Vector ref = unconstrained_step(lhat, y, s.eta);
    for (std::size_t a = 0; a < k; ++a) EXPECT_NEAR(r.point[a], ref[a], 1e-9);
    EXPECT_LE(r.kkt_residual, 1e-8);
  }
}

TEST(OmdStep, LowerBoundBinds) {
  const LrSchedule s = LrSchedule::initial(2, 100, 10.0);
  const OmdResult r = omd_step(Vector{200.0, 0.0}, Strategy::uniform(2), s, simplex_space(2, 0.01));
  EXPECT_NEAR(r.point[0], 0.01, 1e-12);
  EXPECT_LE(r.kkt_residual, 1e-8);
}

TEST(OmdStep, SafeRowBinds) {
  const LrSchedule s = LrSchedule::initial(2, 100, 1.0);
  const SafeSpaceSpec space = one_row_space({1.0, 0.0}, 0.3, 0.01);
  const OmdResult r = omd_step(Vector{0.0, 5.0}, Strategy(Vector{0.2, 0.8}), s, space);
  EXPECT_NEAR(r.point[0], 0.3, 1e-12);
  EXPECT_LE(r.kkt_residual, 1e-8);
}

TEST(OmdStep, StartsOutsideTheSpace) {
  const LrSchedule s = LrSchedule::initial(3, 100, 0.2);
  const SafeSpaceSpec space = one_row_space({0.9, 0.5, 0.1}, 0.2, 0.01);
  const OmdResult r = omd_step(Vector{0.0, 0.0, 0.0}, Strategy::uniform(3), s, space);
  EXPECT_TRUE(space.contains(r.point, 1e-10));
  EXPECT_LE(r.kkt_residual, 1e-8);
}

TEST(OmdStep, SinglePointSpace) {
  // x(0) <= 0.01 with lower bound 0.01 pins x(0).
  const LrSchedule s = LrSchedule::initial(2, 100, 0.2);
  const SafeSpaceSpec space = one_row_space({1.0, 0.0}, 0.01, 0.01);
  const OmdResult r = omd_step(Vector{0.0, 1.0}, Strategy::uniform(2), s, space);
  EXPECT_NEAR(r.point[0], 0.01, 1e-12);
  EXPECT_LE(r.kkt_residual, 1e-8);
}

TEST(OmdStep, EmptySpaceIsRejected) {
  const LrSchedule s = LrSchedule::initial(2, 100, 0.2);
  const SafeSpaceSpec space = one_row_space({1.0, 1.0}, 0.5, 0.01);
  EXPECT_THROW(omd_step(Vector{0.0, 0.0}, Strategy::uniform(2), s, space), ValidationError);
}

TEST(OmdStep, ObjectiveNotAboveAnyFeasibleSample) {
  Rng rng(6);
  const LrSchedule s = LrSchedule::initial(3, 200, 0.3);
  const SafeSpaceSpec space = one_row_space({0.7, 0.4, 0.1}, 0.35, 1.0 / 200);
  const Strategy y(Vector{0.5, 0.3, 0.2});
  const Vector lhat{0.0, 3.0, 0.0};
  const OmdResult r = omd_step(lhat, y, s, space);
  const double best = omd_objective(r.point.weights(), lhat, y, s);
  for (int n = 0; n < 20000; ++n) {
    const Strategy x = sample_truncated_simplex(3, 200, rng);
    if (!space.contains(x, 0.0)) continue;
    EXPECT_LE(best, omd_objective(x.weights(), lhat, y, s) + 1e-12);
  }
}

TEST(KktResidual, GrowsAwayFromTheSolution) {
  const LrSchedule s = LrSchedule::initial(3, 100, 0.5);
  const SafeSpaceSpec space = one_row_space({0.9, 0.2, 0.1}, 0.4, 0.01);
  const Strategy y = Strategy::uniform(3);
  const Vector lhat{0.0, 0.0, 2.0};
  const OmdResult r = omd_step(lhat, y, s, space);
  Vector p = r.point.vec();
  p[1] += 1e-4;
  p[2] -= 1e-4;
  const double perturbed = kkt_residual(Strategy(p), lhat, y, s, space);
  EXPECT_GE(perturbed, 10.0 * r.kkt_residual);
  EXPECT_GT(perturbed, 1e-6);
}

// K=2 subproblems against the grid scan of the objective.
TEST(OmdStep, AgreesWithGridOracle) {
  Rng rng(7);
  int compared = 0;
  for (int n = 0; n < 60; ++n) {
    const std::size_t T = 100;
    const Vector g{uniform01(rng), uniform01(rng)};
    const SafeSpaceSpec space = one_row_space(g, 0.1 + 0.8 * uniform01(rng), 1.0 / T);
    if (!space.nonempty()) continue;
    const Strategy y = sample_truncated_simplex(2, T, rng);
    Vector lhat(2, 0.0);
    lhat[n % 2] = 1.0 / (0.05 + uniform01(rng));
    const LrSchedule s = LrSchedule::initial(2, T, 0.05 + uniform01(rng));
    const OmdResult r = omd_step(lhat, y, s, space);
    auto f = [&](std::span<const double> x) {
      if (x[0] <= 0.0 || x[1] <= 0.0) return std::numeric_limits<double>::infinity();
      return omd_objective(x, lhat, y, s);
    };
    const LpSolution grid = grid_oracle(f, space.to_polytope(), 1e-5);
    ASSERT_TRUE(grid.optimal());
    EXPECT_NEAR(r.point[0], grid.point[0], 1e-4);
    ++compared;
  }
  EXPECT_GT(compared, 30);
}
