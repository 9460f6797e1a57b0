#pragma once

// Quick self-checks behind `cmablab verify`: the LP and OMD solvers against
// brute-force grid scans, the combination-factor algebra, and estimator
// coverage. Each check uses its own fixed seed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "cmab/algorithms.hpp"
#include "cmab/core.hpp"
#include "cmab/environments.hpp"
#include "cmab/estimation.hpp"
#include "cmab/lp.hpp"
#include "cmab/omd.hpp"

namespace cmab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix g(rows, Vector(cols));
  for (auto& r : g) {
    for (double& v : r) v = uniform01(rng);
  }
  return g;
}

inline CheckResult check_lp_vs_grid(int trials) {
  Rng rng(101);
  double worst = 0.0;
  int compared = 0;
  for (int n = 0; n < trials; ++n) {
    const std::size_t k = 2 + static_cast<std::size_t>(rng() % 2);
    const std::size_t m = 1 + static_cast<std::size_t>(rng() % 2);
    Vector c(k);
    for (double& v : c) v = uniform01(rng);
    Polytope p(k);
    for (std::size_t i = 0; i < m; ++i) {
      Vector row(k);
      for (double& v : row) v = uniform01(rng);
      p.add_row(row, 0.2 + 0.8 * uniform01(rng));
    }
    const LpSolution lp = solve_lp(c, p);
    const LpSolution grid = grid_oracle(c, p, k == 2 ? 1e-4 : 2e-3);
    if (lp.optimal() != grid.optimal()) {
      return {"lp-vs-grid", false, "feasibility disagrees on trial " + std::to_string(n)};
    }
    if (!lp.optimal()) continue;
    worst = std::max(worst, std::abs(lp.objective - grid.objective));
    ++compared;
  }
  std::ostringstream os;
  os << compared << " programs, max |LP - grid| = " << worst;
  return {"lp-vs-grid", worst <= 1e-3, os.str()};
}

inline CheckResult check_omd_vs_grid(int trials) {
  Rng rng(202);
  double worst_gap = 0.0;
  double worst_kkt = 0.0;
  for (int n = 0; n < trials; ++n) {
    const std::size_t T = 100;
    EstimatorState est(2, 1, T, 0.1);
    const std::size_t pulls = 20 + rng() % 200;
    const Vector g{uniform01(rng), uniform01(rng)};
    for (std::size_t s = 0; s < pulls; ++s) {
      const std::size_t a = rng() % 2;
      est.update(a, Vector{uniform01(rng) < g[a] ? 1.0 : 0.0});
    }
    const Vector alphas{0.1 + 0.8 * uniform01(rng)};
    const SafeSpaceSpec space = truncated_safe_space(est, alphas, T);
    if (!space.nonempty()) continue;
    const Strategy center = sample_truncated_simplex(2, T, rng);
    Vector loss(2, 0.0);
    loss[rng() % 2] = 1.0 / (0.05 + uniform01(rng));
    const LrSchedule sched = LrSchedule::initial(2, T, 0.05 + uniform01(rng));
    const OmdResult r = omd_step(loss, center, sched, space);
    auto f = [&](std::span<const double> x) {
      if (x[0] <= 0.0 || x[1] <= 0.0) return std::numeric_limits<double>::infinity();
      return omd_objective(x, loss, center, sched);
    };
    const LpSolution grid = grid_oracle(f, space.to_polytope(), 1e-5);
    worst_gap = std::max(worst_gap, std::abs(r.point[0] - grid.point[0]));
    worst_kkt = std::max(worst_kkt, r.kkt_residual);
  }
  std::ostringstream os;
  os << "max |x - grid| = " << worst_gap << ", max KKT residual = " << worst_kkt;
  return {"omd-vs-grid", worst_gap <= 1e-4 && worst_kkt <= 1e-8, os.str()};
}

inline CheckResult check_combination_algebra(int trials) {
  Rng rng(303);
  double worst = -1.0;
  for (int n = 0; n < trials; ++n) {
    const double alpha = 0.05 + 0.9 * uniform01(rng);
    const double theta = alpha * uniform01(rng) * 0.999;
    const double p = 1.5 * uniform01(rng);
    const double gamma = combination_factor(Vector{p}, Vector{alpha}, Vector{theta});
    const double mixed = gamma * theta + (1.0 - gamma) * std::min(p, 1.0);
    worst = std::max(worst, mixed - alpha);
  }
  std::ostringstream os;
  os << "max (mixed cost - alpha) = " << worst;
  return {"combination-algebra", worst <= 1e-12, os.str()};
}

inline CheckResult check_clean_event(int runs) {
  const double delta = 0.1;
  const Matrix g{{0.3, 0.7}};
  int ok = 0;
  for (int n = 0; n < runs; ++n) {
    Rng rng = make_stream(static_cast<std::uint64_t>(n), 404);
    const std::size_t T = 300;
    EstimatorState est(2, 1, T, delta);
    bool clean = true;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t a = t % 2;
      est.update(a, Vector{stochastic_cost_sample(g[0][a], CostFamily::bernoulli, rng)});
      clean = clean && clean_event_holds(est, g);
    }
    ok += clean ? 1 : 0;
  }
  const double freq = static_cast<double>(ok) / runs;
  std::ostringstream os;
  os << "clean-event frequency " << freq << " over " << runs << " runs";
  return {"clean-event", freq >= 1.0 - delta, os.str()};
}

}  // namespace detail

inline std::vector<CheckResult> run_verification() {
  return {detail::check_lp_vs_grid(50), detail::check_omd_vs_grid(30),
          detail::check_combination_algebra(10000), detail::check_clean_event(200)};
}

}  // namespace cmab
