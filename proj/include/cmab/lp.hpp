#pragma once

// Exact small-scale linear programming over the simplex: the offline
// benchmark, the max-margin strictly feasible strategy, feasibility of the
// truncated safe space, and a brute-force grid oracle for tests.
//
// The solver is a dense two-phase tableau simplex with Bland's rule. Sizes
// here are K <= ~64 variables and m <= ~16 rows, so cycling protection
// matters more than speed.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cmab/core.hpp"
#include "cmab/error.hpp"

namespace cmab {

enum class LpStatus { optimal, infeasible, unbounded };

/// {x in simplex : rows[j]^T x <= bounds[j], x(a) >= lower[a]}.
struct Polytope {
  std::size_t dim = 0;
  Matrix rows;
  Vector bounds;
  Vector lower;  // per-coordinate lower bound; empty means all zero

  explicit Polytope(std::size_t k = 0) : dim(k) {}

  void add_row(Vector coeffs, double bound) {
    if (coeffs.size() != dim) throw ValidationError("polytope row has wrong length");
    rows.push_back(std::move(coeffs));
    bounds.push_back(bound);
  }

  void set_uniform_lower(double lb) { lower.assign(dim, lb); }

  double lower_at(std::size_t a) const { return lower.empty() ? 0.0 : lower[a]; }

  /// Largest violation of any row or lower bound (0 when inside); ignores the
  /// sum-to-one equality.
  double max_violation(std::span<const double> x) const {
    double v = 0.0;
    for (std::size_t j = 0; j < rows.size(); ++j) v = std::max(v, dot(rows[j], x) - bounds[j]);
    for (std::size_t a = 0; a < dim; ++a) v = std::max(v, lower_at(a) - x[a]);
    return v;
  }

  void validate() const {
    if (dim == 0) throw ValidationError("polytope has zero dimension");
    if (rows.size() != bounds.size()) throw ValidationError("polytope rows/bounds mismatch");
    for (const auto& r : rows) {
      if (r.size() != dim) throw ValidationError("polytope row has wrong length");
    }
    if (!lower.empty() && lower.size() != dim) throw ValidationError("polytope lower bounds size");
  }
};

struct LpSolution {
  Strategy point;  // empty unless optimal
  double objective = std::numeric_limits<double>::quiet_NaN();
  LpStatus status = LpStatus::infeasible;

  bool optimal() const { return status == LpStatus::optimal; }
};

/// minimize c^T y  s.t.  A_ub y <= b_ub,  A_eq y = b_eq,  y >= 0.
struct LinearProgram {
  Vector c;
  Matrix a_ub;
  Vector b_ub;
  Matrix a_eq;
  Vector b_eq;
};

struct SimplexResult {
  LpStatus status = LpStatus::infeasible;
  Vector y;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double phase1_objective = 0.0;
};

namespace detail {

inline constexpr double kPivotTol = 1e-11;
inline constexpr double kPhase1Tol = 1e-9;

class Tableau {
 public:
  Tableau(const LinearProgram& lp) {
    n_ = lp.c.size();
    const std::size_t n_ub = lp.a_ub.size();
    const std::size_t n_eq = lp.a_eq.size();
    rows_ = n_ub + n_eq;

    // Count artificials: every equality row and every <= row with negative rhs.
    std::size_t n_art = n_eq;
    for (double b : lp.b_ub) {
      if (b < 0.0) ++n_art;
    }
    slack0_ = n_;
    art0_ = n_ + n_ub;
    cols_ = art0_ + n_art;
    t_.assign(rows_, Vector(cols_ + 1, 0.0));
    basis_.assign(rows_, 0);

    std::size_t art = art0_;
    for (std::size_t i = 0; i < n_ub; ++i) {
      if (lp.a_ub[i].size() != n_) throw ValidationError("LP row has wrong length");
      const double sign = lp.b_ub[i] < 0.0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < n_; ++j) t_[i][j] = sign * lp.a_ub[i][j];
      t_[i][slack0_ + i] = sign;
      t_[i][cols_] = sign * lp.b_ub[i];
      if (sign > 0.0) {
        basis_[i] = slack0_ + i;
      } else {
        t_[i][art] = 1.0;
        basis_[i] = art++;
      }
    }
    for (std::size_t e = 0; e < n_eq; ++e) {
      const std::size_t i = n_ub + e;
      if (lp.a_eq[e].size() != n_) throw ValidationError("LP row has wrong length");
      const double sign = lp.b_eq[e] < 0.0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < n_; ++j) t_[i][j] = sign * lp.a_eq[e][j];
      t_[i][cols_] = sign * lp.b_eq[e];
      t_[i][art] = 1.0;
      basis_[i] = art++;
    }
    removed_.assign(rows_, false);
  }

  // Phase 1: minimize the sum of artificials. Returns that minimum.
  double phase1() {
    Vector cost(cols_, 0.0);
    for (std::size_t j = art0_; j < cols_; ++j) cost[j] = 1.0;
    run(cost, /*allow_artificial=*/true);
    double obj = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      if (!removed_[i] && basis_[i] >= art0_) obj += t_[i][cols_];
    }
    return obj;
  }

  // Pivots remaining (zero-valued) artificials out of the basis; rows where
  // that is impossible are linearly dependent and get dropped.
  void expel_artificials() {
    for (std::size_t i = 0; i < rows_; ++i) {
      if (removed_[i] || basis_[i] < art0_) continue;
      std::size_t enter = cols_;
      for (std::size_t j = 0; j < art0_; ++j) {
        if (std::abs(t_[i][j]) > 1e-9) {
          enter = j;
          break;
        }
      }
      if (enter == cols_) {
        removed_[i] = true;
      } else {
        pivot(i, enter);
      }
    }
  }

  LpStatus phase2(std::span<const double> c) {
    Vector cost(cols_, 0.0);
    std::copy(c.begin(), c.end(), cost.begin());
    return run(cost, /*allow_artificial=*/false);
  }

  Vector primal() const {
    Vector y(n_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      if (!removed_[i] && basis_[i] < n_) y[basis_[i]] = t_[i][cols_];
    }
    return y;
  }

 private:
  void pivot(std::size_t r, std::size_t c) {
    const double p = t_[r][c];
    for (double& v : t_[r]) v /= p;
    for (std::size_t i = 0; i < rows_; ++i) {
      if (i == r || removed_[i]) continue;
      const double f = t_[i][c];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= cols_; ++j) t_[i][j] -= f * t_[r][j];
      t_[i][c] = 0.0;
    }
    basis_[r] = c;
  }

  // Primal simplex with Bland's rule: lowest-index entering column with a
  // negative reduced cost; ratio ties broken by the lowest basic index.
  LpStatus run(const Vector& cost, bool allow_artificial) {
    const std::size_t limit = allow_artificial ? cols_ : art0_;
    std::vector<char> is_basic(cols_, 0);
    for (std::size_t iter = 0; iter < 100000; ++iter) {
      std::fill(is_basic.begin(), is_basic.end(), 0);
      for (std::size_t i = 0; i < rows_; ++i) {
        if (!removed_[i]) is_basic[basis_[i]] = 1;
      }
      std::size_t enter = cols_;
      for (std::size_t j = 0; j < limit; ++j) {
        if (is_basic[j]) continue;
        double r = cost[j];
        for (std::size_t i = 0; i < rows_; ++i) {
          if (!removed_[i]) r -= cost[basis_[i]] * t_[i][j];
        }
        if (r < -kPivotTol) {
          enter = j;
          break;
        }
      }
      if (enter == cols_) return LpStatus::optimal;

      std::size_t leave = rows_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < rows_; ++i) {
        if (removed_[i] || t_[i][enter] <= kPivotTol) continue;
        const double ratio = std::max(0.0, t_[i][cols_]) / t_[i][enter];
        if (ratio < best - 1e-14 ||
            (std::abs(ratio - best) <= 1e-14 && leave < rows_ && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave == rows_) return LpStatus::unbounded;
      pivot(leave, enter);
    }
    return LpStatus::unbounded;  // iteration guard; Bland's rule should never get here
  }

  std::size_t n_ = 0, rows_ = 0, cols_ = 0, slack0_ = 0, art0_ = 0;
  Matrix t_;
  std::vector<std::size_t> basis_;
  std::vector<bool> removed_;
};

}  // namespace detail

/// Two-phase simplex. With `phase1_only` the result reports feasibility
/// (status optimal/infeasible) and a feasible point but no objective.
inline SimplexResult simplex_solve(const LinearProgram& lp, bool phase1_only = false) {
  if (lp.a_ub.size() != lp.b_ub.size() || lp.a_eq.size() != lp.b_eq.size()) {
    throw ValidationError("LP rows/rhs mismatch");
  }
  detail::Tableau tab(lp);
  SimplexResult res;
  res.phase1_objective = tab.phase1();
  if (res.phase1_objective > detail::kPhase1Tol) {
    res.status = LpStatus::infeasible;
    return res;
  }
  tab.expel_artificials();
  if (!phase1_only) {
    res.status = tab.phase2(lp.c);
    if (res.status != LpStatus::optimal) return res;
  }
  res.status = LpStatus::optimal;
  res.y = tab.primal();
  res.objective = phase1_only ? 0.0 : dot(lp.c, res.y);
  return res;
}

namespace detail {

// Shift x = y + lower so the LP runs over y >= 0.
inline LinearProgram shifted_program(std::span<const double> c, const Polytope& p, bool& empty) {
  p.validate();
  LinearProgram lp;
  lp.c.assign(c.begin(), c.end());
  Vector lb(p.dim);
  for (std::size_t a = 0; a < p.dim; ++a) lb[a] = p.lower_at(a);
  for (std::size_t j = 0; j < p.rows.size(); ++j) {
    lp.a_ub.push_back(p.rows[j]);
    lp.b_ub.push_back(p.bounds[j] - dot(p.rows[j], lb));
  }
  double rest = 1.0;
  for (double v : lb) rest -= v;
  empty = rest < -1e-12;
  lp.a_eq.push_back(Vector(p.dim, 1.0));
  lp.b_eq.push_back(std::max(0.0, rest));
  return lp;
}

inline Strategy unshift(const Vector& y, const Polytope& p) {
  Vector x(p.dim);
  for (std::size_t a = 0; a < p.dim; ++a) x[a] = y[a] + p.lower_at(a);
  return Strategy::normalized(std::move(x));
}

}  // namespace detail

/// minimize c^T x over the polytope.
inline LpSolution solve_lp(std::span<const double> c, const Polytope& p) {
  if (c.size() != p.dim) throw ValidationError("objective has wrong length");
  bool empty = false;
  const LinearProgram lp = detail::shifted_program(c, p, empty);
  LpSolution out;
  if (empty) return out;
  const SimplexResult r = simplex_solve(lp);
  out.status = r.status;
  if (r.status == LpStatus::optimal) {
    out.point = detail::unshift(r.y, p);
    out.objective = out.point.dot(c);
  }
  return out;
}

/// Offline benchmark: min mean_loss^T x over {x in simplex : g_i^T x <= alpha_i}.
/// `objective` is the per-round OPT value. Among multiple minimizers the one
/// reached by Bland's pivoting order is returned.
inline LpSolution solve_offline_opt(std::span<const double> mean_loss, const Matrix& cost_means,
                                    std::span<const double> alphas) {
  if (cost_means.size() != alphas.size()) throw ValidationError("cost_means/alphas mismatch");
  Polytope p(mean_loss.size());
  for (std::size_t i = 0; i < cost_means.size(); ++i) p.add_row(cost_means[i], alphas[i]);
  return solve_lp(mean_loss, p);
}

// Margins at or below this count as a Slater violation.
inline constexpr double kSlaterTol = 1e-12;

/// x_diamond = argmax_x min_i (alpha_i - g_i^T x), solved as
///   max s  s.t.  g_i^T x + s <= alpha_i,  x in simplex,
/// with s shifted by +1 (margins live in [-1, 1]) so every variable is >= 0.
inline FeasibleAnchor solve_max_margin(const Matrix& cost_means, std::span<const double> alphas) {
  if (cost_means.empty() || cost_means.size() != alphas.size()) {
    throw ValidationError("cost_means/alphas mismatch");
  }
  const std::size_t k = cost_means.front().size();
  LinearProgram lp;
  lp.c.assign(k + 1, 0.0);
  lp.c[k] = -1.0;
  for (std::size_t i = 0; i < cost_means.size(); ++i) {
    if (cost_means[i].size() != k) throw ValidationError("ragged cost_means");
    Vector row = cost_means[i];
    row.push_back(1.0);
    lp.a_ub.push_back(std::move(row));
    lp.b_ub.push_back(alphas[i] + 1.0);
  }
  Vector sum_row(k + 1, 1.0);
  sum_row[k] = 0.0;
  lp.a_eq.push_back(std::move(sum_row));
  lp.b_eq.push_back(1.0);
  Vector cap(k + 1, 0.0);  // s' <= 2 keeps the LP bounded
  cap[k] = 1.0;
  lp.a_ub.push_back(std::move(cap));
  lp.b_ub.push_back(2.0);

  const SimplexResult r = simplex_solve(lp);
  if (r.status != LpStatus::optimal) throw FeasibilityError("max-margin LP failed");
  FeasibleAnchor anchor;
  anchor.x_diamond = Strategy::normalized(Vector(r.y.begin(), r.y.begin() + static_cast<long>(k)));
  anchor.thetas = expected_costs(cost_means, anchor.x_diamond);
  anchor.rho = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    anchor.rho = std::min(anchor.rho, alphas[i] - anchor.thetas[i]);
  }
  if (anchor.rho <= kSlaterTol) {
    throw FeasibilityError("Slater's condition fails: best margin " + std::to_string(anchor.rho));
  }
  return anchor;
}

/// True iff some simplex point satisfies every row and lower bound (phase-1
/// LP; artificial objective <= 1e-9 counts as feasible).
inline bool feasibility_check(const Polytope& p) {
  bool empty = false;
  const LinearProgram lp = detail::shifted_program(Vector(p.dim, 0.0), p, empty);
  if (empty) return false;
  return simplex_solve(lp, /*phase1_only=*/true).status == LpStatus::optimal;
}

/// Brute-force scan of the simplex grid with spacing `step` (K <= 3). The
/// objective is any callable taking std::span<const double>. Grid points
/// count as feasible within 1e-12.
template <class Objective>
  requires std::invocable<Objective&, std::span<const double>>
LpSolution grid_oracle(Objective&& objective, const Polytope& p, double step) {
  p.validate();
  if (p.dim > 3 || p.dim < 2) throw ValidationError("grid_oracle supports K in {2,3} only");
  if (!(step > 0.0 && step <= 1e-2)) throw ValidationError("grid_oracle needs 0 < step <= 1e-2");
  const long n = std::lround(1.0 / step);
  const double h = 1.0 / static_cast<double>(n);
  LpSolution best;
  Vector x(p.dim);
  auto consider = [&] {
    if (p.max_violation(x) > 1e-12) return;
    const double v = objective(std::span<const double>(x));
    if (best.status != LpStatus::optimal || v < best.objective) {
      best.status = LpStatus::optimal;
      best.objective = v;
      best.point = Strategy::normalized(x);
    }
  };
  if (p.dim == 2) {
    for (long i = 0; i <= n; ++i) {
      x[0] = static_cast<double>(i) * h;
      x[1] = static_cast<double>(n - i) * h;
      consider();
    }
  } else {
    for (long i = 0; i <= n; ++i) {
      for (long j = 0; i + j <= n; ++j) {
        x[0] = static_cast<double>(i) * h;
        x[1] = static_cast<double>(j) * h;
        x[2] = static_cast<double>(n - i - j) * h;
        consider();
      }
    }
  }
  return best;
}

/// Linear-objective convenience overload.
inline LpSolution grid_oracle(std::span<const double> c, const Polytope& p, double step) {
  const Vector coeffs(c.begin(), c.end());
  return grid_oracle([&coeffs](std::span<const double> x) { return dot(coeffs, x); }, p, step);
}

}  // namespace cmab
