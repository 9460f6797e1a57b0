#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cmab/algorithms.hpp"
#include "cmab/environments.hpp"
#include "cmab/harness.hpp"
#include "cmab/lp.hpp"

using namespace cmab;

TEST(CombinationFactor, Examples) {
  EXPECT_NEAR(combination_factor(Vector{0.8}, Vector{0.5}, Vector{0.2}), 0.5, 1e-15);
  EXPECT_NEAR(combination_factor(Vector{1.4}, Vector{0.5}, Vector{0.2}), 0.625, 1e-15);
  EXPECT_EQ(combination_factor(Vector{0.4}, Vector{0.5}, Vector{0.2}), 0.0);
}

TEST(CombinationFactor, MaxOverConstraints) {
  const double g = combination_factor(Vector{0.8, 0.9}, Vector{0.5, 0.5}, Vector{0.2, 0.1});
  EXPECT_NEAR(g, std::max(0.3 / 0.6, 0.4 / 0.8), 1e-15);
}

TEST(CombinationFactor, PreconditionAndMonotonicity) {
  EXPECT_THROW(combination_factor(Vector{0.8}, Vector{0.5}, Vector{0.5}), ValidationError);
  Rng rng(1);
  for (int n = 0; n < 5000; ++n) {
    const double alpha = 0.05 + 0.9 * uniform01(rng);
    const double theta = alpha * uniform01(rng) * 0.99;
    const double p = 1.5 * uniform01(rng);
    const double q = p + 0.3 * uniform01(rng);
    EXPECT_LE(combination_factor(Vector{p}, Vector{alpha}, Vector{theta}),
              combination_factor(Vector{q}, Vector{alpha}, Vector{theta}) + 1e-15);
    EXPECT_LE(combination_factor(Vector{q}, Vector{alpha}, Vector{theta}),
              (1 - alpha) / (1 - theta) + 1e-15);
  }
}

TEST(TheoreticalEta, LogFactor) {
  EXPECT_NEAR(eta_log_factor_h(std::exp(3.0), 0.1), std::log(270.0), 1e-12);
  EXPECT_NEAR(eta_log_factor_h(std::exp(3.0), 0.1), 5.5984, 1e-4);
}

TEST(TheoreticalEta, SoftExample) {
  // T must be an integer here; T = 20 has ceil(ln T) = 3 and ceil(3 ln T) = 9 like e^3.
  const std::size_t T = 20;
  const double h = std::log(3.0 * 9.0 / 0.1);
  const double first = 1.0 / (40.0 * h * std::log(20.0) * std::log(h / 0.1));
  const double second = std::sqrt(4.0 / (400.0 * std::log(10.0)));
  const double eta = theoretical_eta(EtaMode::soft, 0.0, T, 0.1, 4, 400.0);
  EXPECT_GT(first, 0.0);
  EXPECT_GT(second, 0.0);
  EXPECT_DOUBLE_EQ(eta, std::min(first, second));
}

TEST(TheoreticalEta, LimitsAndPreconditions) {
  EXPECT_LT(theoretical_eta(EtaMode::soft, 0.0, 1000, 0.1, 2, 1e300), 1e-140);
  // L* below one is floored at one.
  EXPECT_EQ(theoretical_eta(EtaMode::soft, 0.0, 1000, 0.1, 2, 0.0),
            theoretical_eta(EtaMode::soft, 0.0, 1000, 0.1, 2, 1.0));
  EXPECT_THROW(theoretical_eta(EtaMode::hard, 0.01, 1000, 0.1, 2, 10.0), ConfigError);
  const double soft = theoretical_eta(EtaMode::soft, 0.0, 1000, 0.1, 2, 1.0);
  EXPECT_NEAR(theoretical_eta(EtaMode::hard, 0.5, 1000, 0.1, 2, 1.0), 0.5 * soft, 1e-18);
}

namespace {

// Learner that records restarts and does nothing else.
class NullLearner final : public Learner {
 public:
  explicit NullLearner(double eta) : x_(Strategy::uniform(2)), sched_(LrSchedule::initial(2, 100, eta)) {}
  const Strategy& strategy() const override { return x_; }
  const Strategy& omd_iterate() const override { return x_; }
  double gamma() const override { return 0.0; }
  void update(const Feedback&, Rng&) override {}
  void observe_last(const Feedback&) override {}
  const EstimatorState& estimator() const override { return est_; }
  const LrSchedule& schedule() const override { return sched_; }
  const StepInfo& last_step() const override { return info_; }
  void restart(double eta) override { sched_ = LrSchedule::initial(2, 100, eta); }
  std::string name() const override { return "null"; }

 private:
  Strategy x_;
  LrSchedule sched_;
  EstimatorState est_;
  StepInfo info_;
};

}  // namespace

TEST(Doubling, CountsBreachedGuesses) {
  auto make = [](double eta) { return std::make_unique<NullLearner>(eta); };
  auto eta_for = [](double g) { return 1.0 / g; };
  Rng rng(1);
  {
    auto d = DoublingEtaLearner::create(make, eta_for);
    for (int t = 0; t < 10; ++t) d->update(Feedback{0, 0.1, {0.0}}, rng);  // total 1.0
    EXPECT_EQ(d->restarts(), 0u);
  }
  {
    auto d = DoublingEtaLearner::create(make, eta_for);
    for (int t = 0; t < 9; ++t) d->update(Feedback{0, 1.0, {0.0}}, rng);
    EXPECT_EQ(d->restarts(), 4u);  // guesses 1, 2, 4, 8 breached
    EXPECT_EQ(d->guess(), 16.0);
    EXPECT_DOUBLE_EQ(d->schedule().eta_base, 1.0 / 16.0);
  }
}

namespace {

ProblemParams params2(std::size_t T, double alpha) { return ProblemParams{2, 1, T, 0.1, {alpha}}; }

// Unconstrained log-barrier step over Omega computed on a grid.
Strategy grid_step(const Vector& lhat, const Strategy& y, const Vector& eta, const Polytope& p) {
  auto f = [&](std::span<const double> x) {
    if (x[0] <= 0.0 || x[1] <= 0.0) return std::numeric_limits<double>::infinity();
    double v = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
      const double u = x[a] / y[a];
      v += lhat[a] * x[a] + (u - 1.0 - std::log(u)) / eta[a];
    }
    return v;
  };
  return grid_oracle(f, p, 1e-5).point;
}

}  // namespace

TEST(Colb, ZeroLossStaysUniform) {
  const ProblemParams p = params2(100, 0.9);
  ColbState s = colb_init(p, 0.5);
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    colb_round(s, p, Feedback{static_cast<std::size_t>(t % 2), 0.0, {0.0}}, rng);
    EXPECT_NEAR(s.x[0], 0.5, 1e-12);
  }
}

TEST(Colb, FirstRoundIsUnconstrained) {
  const ProblemParams p = params2(100, 0.1);
  ColbState s = colb_init(p, 0.5);
  Rng rng(3);
  colb_round(s, p, Feedback{0, 0.8, {1.0}}, rng);  // beta = 1 leaves the row vacuous
  Polytope omega(2);
  omega.set_uniform_lower(0.01);
  const Strategy ref = grid_step({1.6, 0.0}, Strategy::uniform(2), {0.5, 0.5}, omega);
  EXPECT_NEAR(s.x[0], ref[0], 1e-4);
  EXPECT_FALSE(s.last.space_empty);
}

// Three scripted rounds after a warm-up that makes the safe row bind,
// replayed by hand: counts and means, the truncated safe space, a grid
// search for the OMD step and the threshold rule.
TEST(Colb, ScriptedRoundsMatchHandSimulation) {
  const std::size_t T = 200;
  const double delta = 0.1;
  const double alpha = 0.01;
  const ProblemParams p{2, 1, T, delta, {alpha}};
  ColbState s = colb_init(p, 0.8);
  bool bound = false;
  std::vector<std::size_t> n(2, 0);
  Vector sum(2, 0.0);
  for (int i = 0; i < 150; ++i) {  // arm 0 always costs 1, arm 1 costs 0
    s.est.update(0, Vector{1.0});
    s.est.update(1, Vector{0.0});
  }
  n = {150, 150};
  sum = {150.0, 0.0};

  Strategy x = s.x;
  Vector eta(2, 0.8);
  Vector h(2, 4.0);
  const double kappa = std::exp(1.0 / std::log(double(T)));
  const double lt = std::log(double(T) * 2 / delta);
  Rng rng(4);
  const std::vector<Feedback> script{{0, 0.1, {1.0}}, {1, 0.9, {0.0}}, {0, 0.2, {1.0}}};
  for (const Feedback& fb : script) {
    ++n[fb.action];
    sum[fb.action] += fb.costs[0];
    Vector lhat(2, 0.0);
    lhat[fb.action] = fb.loss / x[fb.action];
    Polytope space(2);
    Vector row(2);
    for (std::size_t a = 0; a < 2; ++a) row[a] = sum[a] / n[a] - std::min(1.0, std::sqrt(4 * lt / n[a]));
    space.add_row(row, alpha + 2.0 / T);
    space.set_uniform_lower(1.0 / T);
    const Strategy next = grid_step(lhat, x, eta, space);

    colb_round(s, p, fb, rng);
    EXPECT_NEAR(s.x[0], next[0], 1e-4);
    bound = bound || s.x.dot(row) > alpha + 2.0 / T - 1e-6;
    x = s.x;  // continue from the library point to keep errors from compounding
    for (std::size_t a = 0; a < 2; ++a) {
      if (1.0 / x[a] > h[a]) {
        h[a] = 2.0 / x[a];
        eta[a] *= kappa;
      }
      EXPECT_DOUBLE_EQ(s.sched.eta[a], eta[a]);
      EXPECT_DOUBLE_EQ(s.sched.thresholds[a], h[a]);
    }
  }
  EXPECT_TRUE(bound);
}

TEST(Colb, EmptySpaceResamplesFromOmegaAndKeepsSchedule) {
  const ProblemParams p = params2(1000, 0.05);
  ColbState s = colb_init(p, 0.5);
  for (int i = 0; i < 2000; ++i) {
    s.est.update(0, Vector{1.0});
    s.est.update(1, Vector{1.0});
  }
  const LrSchedule before = s.sched;
  Rng rng(5);
  colb_round(s, p, Feedback{0, 0.5, {1.0}}, rng);
  EXPECT_TRUE(s.last.space_empty);
  EXPECT_TRUE(s.x.truncated(1000));
  EXPECT_EQ(s.sched.eta, before.eta);
}

namespace {

FeasibleAnchor anchor_for(const Matrix& g, const Vector& alphas) { return solve_max_margin(g, alphas); }

}  // namespace

TEST(Solb, InitialMixture) {
  const Matrix g{{0.8, 0.2}};
  const ProblemParams p = params2(100, 0.5);
  const SolbState s = solb_init(p, 0.1, anchor_for(g, p.alphas));
  // x_diamond = (0,1), theta = 0.2, gamma_0 = 0.5 / 0.8.
  EXPECT_NEAR(s.gamma, 0.625, 1e-12);
  EXPECT_NEAR(s.x_play[0], (1 - 0.625) * 0.5, 1e-12);
}

TEST(Solb, EmptySpacePlaysTheAnchor) {
  const Matrix g{{0.8, 0.2}};
  const ProblemParams p = params2(1000, 0.5);
  SolbState s = solb_init(p, 0.1, anchor_for(g, p.alphas));
  for (int i = 0; i < 5000; ++i) {
    s.est.update(0, Vector{1.0});
    s.est.update(1, Vector{1.0});
  }
  Rng rng(6);
  solb_round(s, p, Feedback{1, 0.5, {1.0}}, rng);
  EXPECT_TRUE(s.last.space_empty);
  EXPECT_EQ(s.gamma, 1.0);
  EXPECT_TRUE(s.x_play == s.anchor.x_diamond);
}

TEST(Solb, SafeIterateMeansNoMixing) {
  const Matrix g{{0.3, 0.1}};
  const ProblemParams p = params2(1000, 0.5);
  SolbState s = solb_init(p, 0.1, anchor_for(g, p.alphas));
  for (int i = 0; i < 3000; ++i) {
    s.est.update(0, Vector{0.0});
    s.est.update(1, Vector{0.0});
  }
  Rng rng(7);
  solb_round(s, p, Feedback{0, 0.5, {0.0}}, rng);
  EXPECT_EQ(s.gamma, 0.0);
  EXPECT_TRUE(s.x_play == s.x_tilde);
}

// Hand replay of three SOLB rounds: importance weights divide by the played
// mixture, the OMD step runs from x_tilde, and gamma follows its formula.
TEST(Solb, ScriptedRoundsMatchHandSimulation) {
  const std::size_t T = 200;
  const double delta = 0.1;
  const double alpha = 0.5;
  const Matrix g{{0.9, 0.1}};
  const ProblemParams p{2, 1, T, delta, {alpha}};
  SolbState s = solb_init(p, 0.5, anchor_for(g, p.alphas));
  const double theta = 0.1;  // anchor is action 1
  ASSERT_NEAR(s.anchor.thetas[0], theta, 1e-12);
  std::vector<std::size_t> n{100, 100};
  Vector sum{90.0, 10.0};
  for (int i = 0; i < 100; ++i) {
    s.est.update(0, Vector{i < 90 ? 1.0 : 0.0});
    s.est.update(1, Vector{i < 10 ? 1.0 : 0.0});
  }
  const double lt = std::log(double(T) * 2 / delta);
  Strategy xt = s.x_tilde;
  Strategy xp = s.x_play;
  Vector eta(2, 0.5);
  Rng rng(8);
  const std::vector<Feedback> script{{0, 0.3, {1.0}}, {1, 0.6, {0.0}}, {0, 0.1, {1.0}}};
  for (const Feedback& fb : script) {
    ++n[fb.action];
    sum[fb.action] += fb.costs[0];
    Vector lhat(2, 0.0);
    lhat[fb.action] = fb.loss / xp[fb.action];
    Vector beta(2);
    Vector row(2);
    for (std::size_t a = 0; a < 2; ++a) {
      beta[a] = std::min(1.0, std::sqrt(4 * lt / n[a]));
      row[a] = sum[a] / n[a] - beta[a];
    }
    Polytope space(2);
    space.add_row(row, alpha + 2.0 / T);
    space.set_uniform_lower(1.0 / T);
    const Strategy next = grid_step(lhat, xt, eta, space);

    solb_round(s, p, fb, rng);
    EXPECT_NEAR(s.x_tilde[0], next[0], 1e-4);
    double pess = 0.0;
    for (std::size_t a = 0; a < 2; ++a) pess += (sum[a] / n[a] + beta[a]) * s.x_tilde[a];
    const double c = std::min(pess, 1.0);
    const double gamma = pess > alpha ? (c - alpha) / (c - theta) : 0.0;
    EXPECT_NEAR(s.gamma, gamma, 1e-12);
    EXPECT_NEAR(s.x_play[1], gamma + (1 - gamma) * s.x_tilde[1], 1e-12);
    xt = s.x_tilde;
    xp = s.x_play;
    eta = s.sched.eta;
  }
}

// With an aggressive rate the OMD iterate moves far from uniform, so safety
// rests on the combination factor alone.
TEST(Solb, PessimisticSafetyUnderCleanEvent) {
  const Matrix g{{0.9, 0.6, 0.2}};
  const Vector alphas{0.45};
  const ProblemParams p{3, 1, 1500, 0.05, alphas};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng env = make_stream(seed, 0);
    Rng lrn = make_stream(seed, 1);
    SolbState s = solb_init(p, 1.0, anchor_for(g, alphas));
    const Matrix losses = bernoulli_losses({0.1, 0.5, 0.9}, p.T, env);
    for (std::size_t t = 0; t + 1 < p.T; ++t) {
      const std::size_t a = sample_action(s.x_play, lrn);
      const double c = stochastic_cost_sample(g[0][a], CostFamily::bernoulli, env);
      solb_round(s, p, Feedback{a, losses[t][a], {c}}, lrn);
      if (clean_event_holds(s.est, g)) {
        EXPECT_LE(s.x_play.dot(g[0]), alphas[0] + 1e-8);
      }
    }
  }
}

TEST(Solb, ImportanceWeightsNeverDivideByZero) {
  const Matrix g{{0.9, 0.0}};
  const ProblemParams p = params2(500, 0.5);
  SolbState s = solb_init(p, 0.5, anchor_for(g, p.alphas));
  Rng rng(9);
  for (int t = 0; t < 400; ++t) {
    const std::size_t a = sample_action(s.x_play, rng);
    ASSERT_GT(s.x_play[a], 0.0);
    solb_round(s, p, Feedback{a, uniform01(rng), {a == 0 ? 1.0 : 0.0}}, rng);
    if (s.gamma < 1.0) {
      for (std::size_t b = 0; b < 2; ++b) EXPECT_GE(s.x_play[b], (1 - s.gamma) / p.T - 1e-15);
    }
  }
}

TEST(Learners, RejectShortHorizons) {
  EXPECT_THROW(ColbLearner(ProblemParams{3, 1, 3, 0.1, {0.5}}, 0.1), ConfigError);
  EXPECT_NO_THROW(ColbLearner(ProblemParams{3, 1, 1, 0.1, {0.5}}, 0.1));
}

TEST(Doubling, RegretComparableToOracleRate) {
  RunConfig cfg;
  cfg.instance.K = 3;
  cfg.instance.m = 1;
  cfg.instance.T = 1000;
  cfg.instance.alphas = {0.5};
  cfg.instance.cost_means = {{0.2, 0.5, 0.9}};
  cfg.instance.loss_source = BernoulliLosses{{0.3, 0.6, 0.8}};
  for (std::uint64_t sd = 1; sd <= 50; ++sd) cfg.seeds.push_back(sd);
  const auto oracle = run(cfg);
  cfg.algorithm = Algorithm::colb_doubling;
  cfg.eta.mode = EtaSpec::Mode::doubling;
  const auto doubled = run(cfg);
  Vector a;
  Vector b;
  for (const auto& m : oracle) a.push_back(m.regret_final());
  for (const auto& m : doubled) b.push_back(m.regret_final());
  EXPECT_LE(median(b), 3.0 * median(a));
  EXPECT_GT(doubled.front().restarts, 0u);
}
