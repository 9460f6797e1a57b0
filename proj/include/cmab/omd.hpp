#pragma once

// Online mirror descent with the log-barrier regularizer
//   psi_t(x) = sum_a (1/eta_{t,a}) ln(1/x(a))
// and per-action increasing learning rates.
//
// omd_step solves
//   argmin_{x in S~}  lhat^T x + D_psi(x, x_current)
// where S~ is a polytope (safe rows + x(a) >= 1/T + sum-to-one). The solver
// is a barrier-augmented damped Newton method in the null space of the
// sum-to-one equality, followed by an active-set polish that solves the
// identified face exactly so that the returned point meets the KKT residual
// contract.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cmab/core.hpp"
#include "cmab/error.hpp"
#include "cmab/estimation.hpp"
#include "cmab/lp.hpp"

namespace cmab {

/// kappa = e^{1/ln T}. For T <= 1 no learning-rate update can ever happen,
/// so the factor is reported as 1.
inline double increase_factor(double horizon) {
  if (horizon <= 1.0) return 1.0;
  return std::exp(1.0 / std::log(horizon));
}

struct LrSchedule {
  Vector eta;         // eta_{t,a}
  Vector thresholds;  // h_{t,a}
  std::vector<int> increases;
  double kappa = 1.0;
  double eta_base = 1.0;

  static LrSchedule initial(std::size_t k, std::size_t horizon, double eta_base) {
    if (!(eta_base > 0.0) || !std::isfinite(eta_base)) {
      throw ValidationError("learning rate must be positive and finite");
    }
    LrSchedule s;
    s.eta.assign(k, eta_base);
    s.thresholds.assign(k, 2.0 * static_cast<double>(k));
    s.increases.assign(k, 0);
    s.kappa = increase_factor(static_cast<double>(horizon));
    s.eta_base = eta_base;
    return s;
  }

  double max_eta() const { return *std::max_element(eta.begin(), eta.end()); }
  double max_ratio() const { return max_eta() / eta_base; }
};

/// For each a with 1/x_next(a) > h_a: h_a <- 2/x_next(a), eta_a <- kappa eta_a.
inline LrSchedule lr_update(const Strategy& x_next, LrSchedule sched) {
  if (x_next.size() != sched.eta.size()) throw ValidationError("lr_update: size mismatch");
  for (std::size_t a = 0; a < x_next.size(); ++a) {
    if (1.0 / x_next[a] > sched.thresholds[a]) {
      sched.thresholds[a] = 2.0 / x_next[a];
      sched.eta[a] *= sched.kappa;
      ++sched.increases[a];
    }
  }
  return sched;
}

inline double log_barrier_value(const Strategy& x, std::span<const double> eta) {
  if (x.size() != eta.size()) throw ValidationError("log_barrier_value: size mismatch");
  double v = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (!(x[a] > 0.0)) throw ValidationError("log-barrier is undefined on the simplex boundary");
    v += std::log(1.0 / x[a]) / eta[a];
  }
  return v;
}

inline double log_barrier_value(const Strategy& x, const LrSchedule& sched) {
  return log_barrier_value(x, sched.eta);
}

/// D_psi(x, y) = sum_a (1/eta_a) h(x(a)/y(a)),  h(u) = u - 1 - ln u.
inline double bregman(const Strategy& x, const Strategy& y, std::span<const double> eta) {
  if (x.size() != y.size() || x.size() != eta.size()) throw ValidationError("bregman: size mismatch");
  double d = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (!(x[a] > 0.0) || !(y[a] > 0.0)) {
      throw ValidationError("bregman: coordinates must be strictly positive");
    }
    const double u = x[a] / y[a];
    d += (u - 1.0 - std::log(u)) / eta[a];
  }
  return d;
}

inline double bregman(const Strategy& x, const Strategy& y, const LrSchedule& sched) {
  return bregman(x, y, sched.eta);
}

namespace detail {

inline constexpr double kCoordFloor = 1e-12;

// The OMD subproblem in x-space with every inequality written as
// q_j^T x <= r_j (slack s_j = r_j - q_j^T x).
class OmdProblem {
 public:
  OmdProblem(std::span<const double> loss, const Strategy& center, std::span<const double> eta,
             const SafeSpaceSpec& space)
      : k_(center.size()), loss_(loss.begin(), loss.end()), center_(center.vec()) {
    if (loss.size() != k_ || eta.size() != k_ || space.dim != k_) {
      throw ValidationError("omd_step: size mismatch");
    }
    inv_eta_.resize(k_);
    for (std::size_t a = 0; a < k_; ++a) {
      if (!(eta[a] > 0.0)) throw ValidationError("omd_step: learning rates must be positive");
      if (!(center_[a] > 0.0)) throw ValidationError("omd_step: current iterate must be positive");
      if (!(loss_[a] >= 0.0) || !std::isfinite(loss_[a])) {
        throw ValidationError("omd_step: loss estimate must be finite and non-negative");
      }
      inv_eta_[a] = 1.0 / eta[a];
    }
    for (std::size_t a = 0; a < k_; ++a) {
      Vector q(k_, 0.0);
      q[a] = -1.0;
      q_.push_back(std::move(q));
      r_.push_back(-space.lower_bound);
    }
    for (std::size_t i = 0; i < space.num_rows(); ++i) {
      q_.push_back(space.coeffs[i]);
      r_.push_back(space.bounds[i]);
    }
  }

  std::size_t dim() const { return k_; }
  std::size_t num_ineq() const { return q_.size(); }
  const Vector& q(std::size_t j) const { return q_[j]; }
  double r(std::size_t j) const { return r_[j]; }

  double slack(std::size_t j, std::span<const double> x) const { return r_[j] - dot(q_[j], x); }

  double objective(std::span<const double> x) const {
    double f = 0.0;
    for (std::size_t a = 0; a < k_; ++a) {
      const double u = std::max(x[a], kCoordFloor) / center_[a];
      f += loss_[a] * x[a] + inv_eta_[a] * (u - 1.0 - std::log(u));
    }
    return f;
  }

  double grad(std::size_t a, std::span<const double> x) const {
    return loss_[a] + inv_eta_[a] * (1.0 / center_[a] - 1.0 / std::max(x[a], kCoordFloor));
  }

  double hess(std::size_t a, std::span<const double> x) const {
    const double xa = std::max(x[a], kCoordFloor);
    return inv_eta_[a] / (xa * xa);
  }

 private:
  std::size_t k_;
  Vector loss_;
  Vector center_;
  Vector inv_eta_;
  Matrix q_;
  Vector r_;
};

struct Multipliers {
  double nu = 0.0;
  std::vector<std::size_t> active;
  Vector lambda;  // aligned with `active`
  double stationarity = 0.0;
};

// Non-negative least squares for (nu free, lambda >= 0) over the candidate
// active set: columns whose multiplier comes out negative are dropped one at
// a time until the rest are non-negative.
inline Multipliers fit_multipliers(const OmdProblem& p, std::span<const double> x,
                                   std::vector<std::size_t> active) {
  const std::size_t k = p.dim();
  Eigen::VectorXd g(k);
  for (std::size_t a = 0; a < k; ++a) g(static_cast<Eigen::Index>(a)) = p.grad(a, x);
  Multipliers out;
  while (true) {
    Eigen::MatrixXd A(k, active.size() + 1);
    A.col(0).setOnes();
    for (std::size_t c = 0; c < active.size(); ++c) {
      for (std::size_t a = 0; a < k; ++a) {
        A(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c + 1)) = p.q(active[c])[a];
      }
    }
    const Eigen::VectorXd w = A.colPivHouseholderQr().solve(-g);
    std::size_t worst = active.size();
    double worst_val = 0.0;
    for (std::size_t c = 0; c < active.size(); ++c) {
      const double v = w(static_cast<Eigen::Index>(c + 1));
      if (v < worst_val) {
        worst_val = v;
        worst = c;
      }
    }
    if (worst < active.size()) {
      active.erase(active.begin() + static_cast<long>(worst));
      continue;
    }
    out.nu = w(0);
    out.active = active;
    out.lambda.resize(active.size());
    for (std::size_t c = 0; c < active.size(); ++c) out.lambda[c] = w(static_cast<Eigen::Index>(c + 1));
    out.stationarity = (g + A * w).lpNorm<Eigen::Infinity>();
    return out;
  }
}

// Constraints with slack at or below this are treated as active when
// measuring the KKT residual.
inline constexpr double kActiveTol = 1e-9;

inline double kkt_residual(const OmdProblem& p, std::span<const double> x) {
  for (double v : x) {
    if (!(v > 0.0)) return std::numeric_limits<double>::infinity();
  }
  double primal = std::abs(std::accumulate(x.begin(), x.end(), 0.0) - 1.0);
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < p.num_ineq(); ++j) {
    const double s = p.slack(j, x);
    primal = std::max(primal, -s);
    if (s <= kActiveTol) active.push_back(j);
  }
  const Multipliers mult = fit_multipliers(p, x, std::move(active));
  double comp = 0.0;
  for (std::size_t c = 0; c < mult.active.size(); ++c) {
    comp = std::max(comp, mult.lambda[c] * std::abs(p.slack(mult.active[c], x)));
  }
  return std::max({mult.stationarity, comp, primal});
}

}  // namespace detail

struct OmdResult {
  Strategy point;
  double kkt_residual = 0.0;
  int newton_iterations = 0;
};

/// Objective of the OMD subproblem: lhat^T x + D_psi(x, x_current).
inline double omd_objective(std::span<const double> x, std::span<const double> loss_estimate,
                            const Strategy& x_current, const LrSchedule& sched) {
  double f = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    const double u = x[a] / x_current[a];
    f += loss_estimate[a] * x[a] + (u - 1.0 - std::log(u)) / sched.eta[a];
  }
  return f;
}

/// Max-norm KKT residual (stationarity, complementary slackness, primal
/// feasibility) of `candidate` for the OMD subproblem. Multipliers are fitted
/// by non-negative least squares over the constraints with slack <= 1e-9.
inline double kkt_residual(const Strategy& candidate, std::span<const double> loss_estimate,
                           const Strategy& x_current, const LrSchedule& sched,
                           const SafeSpaceSpec& space) {
  const detail::OmdProblem p(loss_estimate, x_current, sched.eta, space);
  return detail::kkt_residual(p, candidate.weights());
}

struct OmdSolverOptions {
  double mu_start = 1.0;
  double mu_end = 1e-10;
  double mu_factor = 0.2;
  double newton_tol = 1e-10;  // half squared Newton decrement, per mu
  int max_iterations = 200;   // total Newton iterations (barrier + polish)
  double residual_tol = 1e-8;
};

namespace detail {

class OmdSolver {
 public:
  OmdSolver(const OmdProblem& p, const OmdSolverOptions& opt) : p_(p), opt_(opt), k_(p.dim()) {}

  OmdResult solve(const Strategy& x_current) {
    Vector x = interior_start(x_current);
    if (!degenerate_) barrier(x);
    Vector polished = x;
    if (polish(polished)) x = std::move(polished);

    OmdResult res;
    res.kkt_residual = kkt_residual(p_, x);
    res.newton_iterations = iterations_;
    if (!(res.kkt_residual <= opt_.residual_tol)) {
      throw ConvergenceError("omd_step: KKT residual " + std::to_string(res.kkt_residual) +
                             " above tolerance after " + std::to_string(iterations_) +
                             " Newton iterations");
    }
    res.point = Strategy::normalized(std::move(x));
    return res;
  }

 private:
  void count_iteration() {
    if (++iterations_ > opt_.max_iterations) {
      throw ConvergenceError("omd_step: Newton iteration budget exhausted");
    }
  }

  double min_slack(std::span<const double> x) const {
    double s = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < p_.num_ineq(); ++j) s = std::min(s, p_.slack(j, x));
    return s;
  }

  // Strictly interior starting point: the current iterate when it is already
  // interior, otherwise the max-slack point of the polytope.
  Vector interior_start(const Strategy& x_current) {
    Vector x = x_current.vec();
    if (min_slack(x) > 1e-12) return x;

    // max t  s.t.  q_j^T x + t <= r_j,  sum x = 1,  0 <= t <= 1.
    LinearProgram lp;
    lp.c.assign(k_ + 1, 0.0);
    lp.c[k_] = -1.0;
    for (std::size_t j = 0; j < p_.num_ineq(); ++j) {
      Vector row = p_.q(j);
      row.push_back(1.0);
      lp.a_ub.push_back(std::move(row));
      lp.b_ub.push_back(p_.r(j));
    }
    Vector cap(k_ + 1, 0.0);
    cap[k_] = 1.0;
    lp.a_ub.push_back(std::move(cap));
    lp.b_ub.push_back(1.0);
    Vector sum_row(k_ + 1, 1.0);
    sum_row[k_] = 0.0;
    lp.a_eq.push_back(std::move(sum_row));
    lp.b_eq.push_back(1.0);
    const SimplexResult r = simplex_solve(lp);
    if (r.status != LpStatus::optimal) throw ValidationError("omd_step: safe space is empty");
    x.assign(r.y.begin(), r.y.begin() + static_cast<long>(k_));
    degenerate_ = !(min_slack(x) > 1e-12);
    return x;
  }

  double barrier_value(std::span<const double> x, double mu) const {
    double v = p_.objective(x);
    for (std::size_t j = 0; j < p_.num_ineq(); ++j) {
      const double s = p_.slack(j, x);
      if (!(s > 0.0)) return std::numeric_limits<double>::infinity();
      v -= mu * std::log(s);
    }
    return v;
  }

  void barrier(Vector& x) {
    const auto n = static_cast<Eigen::Index>(k_ - 1);
    Eigen::VectorXd gx(static_cast<Eigen::Index>(k_));
    Eigen::MatrixXd hx(static_cast<Eigen::Index>(k_), static_cast<Eigen::Index>(k_));
    Eigen::VectorXd gz(n);
    Eigen::MatrixXd hz(n, n);
    Vector trial(k_);

    double mu = opt_.mu_start;
    while (true) {
      for (int local = 0;; ++local) {
        hx.setZero();
        for (std::size_t a = 0; a < k_; ++a) {
          const auto ia = static_cast<Eigen::Index>(a);
          gx(ia) = p_.grad(a, x);
          hx(ia, ia) = p_.hess(a, x);
        }
        for (std::size_t j = 0; j < p_.num_ineq(); ++j) {
          const double s = p_.slack(j, x);
          const Vector& q = p_.q(j);
          for (std::size_t a = 0; a < k_; ++a) {
            if (q[a] == 0.0) continue;
            const auto ia = static_cast<Eigen::Index>(a);
            gx(ia) += mu * q[a] / s;
            for (std::size_t b = 0; b < k_; ++b) {
              if (q[b] != 0.0) hx(ia, static_cast<Eigen::Index>(b)) += mu * q[a] * q[b] / (s * s);
            }
          }
        }
        // Null-space reduction with x_K = 1 - sum_{a<K} x_a: P = [I; -1^T].
        const auto last = n;
        for (Eigen::Index i = 0; i < n; ++i) {
          gz(i) = gx(i) - gx(last);
          for (Eigen::Index j = 0; j < n; ++j) {
            hz(i, j) = hx(i, j) - hx(i, last) - hx(last, j) + hx(last, last);
          }
        }
        const Eigen::VectorXd dz = -hz.ldlt().solve(gz);
        const double decrement2 = -gz.dot(dz);
        if (!std::isfinite(decrement2) || decrement2 / 2.0 <= opt_.newton_tol) break;

        Vector dx(k_);
        double sum_dz = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          dx[static_cast<std::size_t>(i)] = dz(i);
          sum_dz += dz(i);
        }
        dx[k_ - 1] = -sum_dz;

        double step = 1.0;
        for (std::size_t j = 0; j < p_.num_ineq(); ++j) {
          const double rate = dot(p_.q(j), dx);
          if (rate > 0.0) step = std::min(step, 0.99 * p_.slack(j, x) / rate);
        }
        const double f0 = barrier_value(x, mu);
        const double slope = -decrement2;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
          for (std::size_t a = 0; a < k_; ++a) trial[a] = x[a] + step * dx[a];
          if (barrier_value(trial, mu) <= f0 + 1e-4 * step * slope) {
            accepted = true;
            break;
          }
          step *= 0.5;
        }
        count_iteration();
        if (!accepted) break;  // stagnated at machine precision
        x.swap(trial);
      }
      if (mu <= opt_.mu_end) break;
      mu = std::max(mu * opt_.mu_factor, opt_.mu_end);
    }
  }

  // Equality-constrained Newton on the face {sum x = 1, q_j^T x = r_j for
  // j in active}, with an outer loop dropping negative multipliers and
  // adding violated constraints. Returns false (leaving the barrier point in
  // charge) when the face cannot be resolved.
  bool polish(Vector& x) {
    const Vector start = x;
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < p_.num_ineq(); ++j) {
      if (p_.slack(j, x) <= 1e-6) active.push_back(j);
    }
    const std::size_t max_outer = p_.num_ineq() + 2;
    for (std::size_t outer = 0; outer < max_outer; ++outer) {
      x = start;
      if (active.size() + 1 > k_) return false;
      const auto na = static_cast<Eigen::Index>(active.size() + 1);
      const auto nk = static_cast<Eigen::Index>(k_);
      Eigen::MatrixXd kkt(nk + na, nk + na);
      Eigen::VectorXd rhs(nk + na);
      bool converged = false;
      for (int it = 0; it < 30; ++it) {
        kkt.setZero();
        for (std::size_t a = 0; a < k_; ++a) {
          const auto ia = static_cast<Eigen::Index>(a);
          kkt(ia, ia) = p_.hess(a, x);
          rhs(ia) = -p_.grad(a, x);
          kkt(ia, nk) = kkt(nk, ia) = 1.0;
        }
        rhs(nk) = 1.0 - std::accumulate(x.begin(), x.end(), 0.0);
        for (std::size_t c = 0; c < active.size(); ++c) {
          const auto row = nk + 1 + static_cast<Eigen::Index>(c);
          const Vector& q = p_.q(active[c]);
          for (std::size_t a = 0; a < k_; ++a) {
            kkt(static_cast<Eigen::Index>(a), row) = kkt(row, static_cast<Eigen::Index>(a)) = q[a];
          }
          rhs(row) = p_.slack(active[c], x);
        }
        const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
        if (!sol.allFinite()) return false;
        double step_norm = 0.0;
        for (std::size_t a = 0; a < k_; ++a) {
          x[a] += sol(static_cast<Eigen::Index>(a));
          step_norm = std::max(step_norm, std::abs(sol(static_cast<Eigen::Index>(a))));
          if (!(x[a] > 0.0)) return false;
        }
        count_iteration();
        // Quadratic convergence: once the step is this small the remaining
        // error is far below round-off, and tighter tests can stall.
        if (step_norm <= 1e-12) {
          converged = true;
          break;
        }
      }
      if (!converged) return false;

      const Multipliers mult = fit_multipliers(p_, x, active);
      if (mult.active.size() < active.size()) {
        // A negative multiplier: the constraint does not bind at the optimum.
        active = mult.active;
        continue;
      }
      std::size_t worst = p_.num_ineq();
      double worst_slack = -1e-13;
      for (std::size_t j = 0; j < p_.num_ineq(); ++j) {
        const double s = p_.slack(j, x);
        if (s < worst_slack) {
          worst_slack = s;
          worst = j;
        }
      }
      if (worst < p_.num_ineq()) {
        active.push_back(worst);
        std::sort(active.begin(), active.end());
        continue;
      }
      return true;
    }
    return false;
  }

  const OmdProblem& p_;
  OmdSolverOptions opt_;
  std::size_t k_;
  int iterations_ = 0;
  bool degenerate_ = false;
};

}  // namespace detail

/// One OMD step over the (non-empty) space. Throws ConvergenceError when the
/// KKT residual of the result exceeds 1e-8 or the Newton budget runs out.
inline OmdResult omd_step(std::span<const double> loss_estimate, const Strategy& x_current,
                          const LrSchedule& sched, const SafeSpaceSpec& space,
                          const OmdSolverOptions& options = {}) {
  const detail::OmdProblem p(loss_estimate, x_current, sched.eta, space);
  return detail::OmdSolver(p, options).solve(x_current);
}

}  // namespace cmab
