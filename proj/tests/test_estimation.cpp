#include <gtest/gtest.h>

#include <cmath>

#include "cmab/environments.hpp"
#include "cmab/estimation.hpp"

using namespace cmab;

TEST(ConfidenceRadius, Examples) {
  EXPECT_EQ(confidence_radius(0, 10.0), 1.0);
  EXPECT_DOUBLE_EQ(confidence_radius(64, 4.0), 0.5);
  EXPECT_DOUBLE_EQ(confidence_radius(16, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(confidence_log_term(100, 2, 1, 0.1), std::log(2000.0));
}

TEST(ConfidenceRadius, NonIncreasingInCount) {
  double prev = 2.0;
  for (std::size_t n = 0; n < 500; ++n) {
    const double r = confidence_radius(n, 3.0);
    EXPECT_LE(r, prev);
    prev = r;
  }
}

TEST(Estimator, MeansAndRadii) {
  EstimatorState est(2, 2, 100, 0.1);
  EXPECT_EQ(est.radius(0), 1.0);
  est.update(0, Vector{1.0, 0.0});
  est.update(0, Vector{0.0, 0.0});
  est.update(1, Vector{1.0, 1.0});
  EXPECT_DOUBLE_EQ(est.mean(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(est.mean(1, 1), 1.0);
  EXPECT_EQ(est.count(0), 2u);
  EXPECT_DOUBLE_EQ(est.radius(0), confidence_radius(2, est.log_term()));
  EXPECT_THROW(est.update(2, Vector{0.0, 0.0}), ValidationError);
  EXPECT_THROW(est.update(0, Vector{1.5, 0.0}), ValidationError);
  EXPECT_THROW(est.update(0, Vector{0.5}), ValidationError);
}

TEST(SafeSpaces, FreshEstimatorMakesRowsVacuous) {
  EstimatorState est(3, 1, 100, 0.05);
  const SafeSpaceSpec s = truncated_safe_space(est, Vector{0.1}, 100);
  EXPECT_TRUE(s.nonempty());
  EXPECT_TRUE(s.contains(Strategy(Vector{0.98, 0.01, 0.01})));
  EXPECT_DOUBLE_EQ(s.bounds[0], 0.1 + 3.0 / 100.0);
  EXPECT_DOUBLE_EQ(s.lower_bound, 0.01);
}

TEST(SafeSpaces, EmptyWhenEveryActionLooksUnsafe) {
  EstimatorState est(2, 1, 1000000, 0.5);
  for (int i = 0; i < 100000; ++i) {
    est.update(0, Vector{1.0});
    est.update(1, Vector{1.0});
  }
  EXPECT_FALSE(strict_safe_space(est, Vector{0.5}).nonempty());
  EXPECT_FALSE(truncated_safe_space(est, Vector{0.5}, 1000000).nonempty());
}

TEST(SafeSpaces, StrictInsideRelaxed) {
  Rng rng(3);
  EstimatorState est(3, 2, 500, 0.05);
  for (int t = 0; t < 400; ++t) {
    const std::size_t a = t % 3;
    est.update(a, Vector{uniform01(rng), uniform01(rng)});
  }
  const Vector alphas{0.4, 0.6};
  const SafeSpaceSpec strict = strict_safe_space(est, alphas);
  const SafeSpaceSpec relaxed = relaxed_safe_space(est, alphas, 500);
  for (int n = 0; n < 2000; ++n) {
    const Strategy x = sample_truncated_simplex(3, 500, rng);
    if (strict.contains(x, 0.0)) {
      EXPECT_TRUE(relaxed.contains(x, 0.0));
    }
  }
}

TEST(CleanEvent, DetectsAWrongMean) {
  EstimatorState est(2, 1, 1000, 0.05);
  for (int i = 0; i < 1000; ++i) {
    est.update(0, Vector{0.0});
    est.update(1, Vector{0.0});
  }
  EXPECT_TRUE(clean_event_holds(est, {{0.0, 0.05}}));
  EXPECT_FALSE(clean_event_holds(est, {{0.9, 0.0}}));
}

// Monte-Carlo coverage of the all-round event on a small instance.
TEST(CleanEvent, HoldsWithHighProbability) {
  const double delta = 0.1;
  const Matrix g{{0.2, 0.5, 0.9}};
  int ok = 0;
  const int runs = 300;
  for (int r = 0; r < runs; ++r) {
    Rng rng = make_stream(static_cast<std::uint64_t>(r), 77);
    EstimatorState est(3, 1, 200, delta);
    bool clean = true;
    for (int t = 0; t < 200; ++t) {
      const std::size_t a = static_cast<std::size_t>(rng() % 3);
      est.update(a, Vector{stochastic_cost_sample(g[0][a], CostFamily::bernoulli, rng)});
      clean = clean && clean_event_holds(est, g);
    }
    ok += clean;
  }
  EXPECT_GE(ok / double(runs), 1.0 - delta);
}
