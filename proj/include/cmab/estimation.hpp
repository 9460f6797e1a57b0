#pragma once

// Online cost estimation with Hoeffding confidence radii, and the safe
// decision spaces built from it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cmab/core.hpp"
#include "cmab/lp.hpp"

namespace cmab {

/// ln(T K m / delta): the union bound over rounds, actions and constraints is
/// already inside this term, so callers pass delta unchanged.
inline double confidence_log_term(std::size_t T, std::size_t K, std::size_t m, double delta) {
  return std::log(static_cast<double>(T) * static_cast<double>(K) * static_cast<double>(m) / delta);
}

/// beta = min{1, sqrt(4 log_term / max{1, n})}.
inline double confidence_radius(std::size_t n, double log_term) {
  const double denom = static_cast<double>(std::max<std::size_t>(1, n));
  return std::min(1.0, std::sqrt(4.0 * log_term / denom));
}

inline double confidence_radius(std::size_t n, std::size_t T, std::size_t K, std::size_t m,
                                double delta) {
  return confidence_radius(n, confidence_log_term(T, K, m, delta));
}

/// Per-action sample counts, per-(constraint, action) cost sums and the
/// per-action confidence radii. Only the updated action's radius is
/// recomputed on each observation.
class EstimatorState {
 public:
  EstimatorState() = default;

  EstimatorState(std::size_t k, std::size_t m, std::size_t horizon, double delta)
      : k_(k),
        m_(m),
        log_term_(confidence_log_term(horizon, k, m, delta)),
        counts_(k, 0),
        cost_sums_(m, Vector(k, 0.0)),
        radii_(k, confidence_radius(0, log_term_)) {
    if (k == 0 || m == 0) throw ValidationError("estimator needs K, m >= 1");
  }

  void update(std::size_t action, std::span<const double> costs) {
    if (action >= k_) throw ValidationError("estimator update: action out of range");
    if (costs.size() != m_) throw ValidationError("estimator update: expected m costs");
    for (double c : costs) {
      if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("observed cost outside [0,1]");
    }
    ++counts_[action];
    for (std::size_t i = 0; i < m_; ++i) cost_sums_[i][action] += costs[i];
    radii_[action] = confidence_radius(counts_[action], log_term_);
  }

  std::size_t num_actions() const { return k_; }
  std::size_t num_constraints() const { return m_; }
  double log_term() const { return log_term_; }
  std::size_t count(std::size_t a) const { return counts_[a]; }
  double radius(std::size_t a) const { return radii_[a]; }
  const Vector& radii() const { return radii_; }

  double mean(std::size_t i, std::size_t a) const {
    return cost_sums_[i][a] / static_cast<double>(std::max<std::size_t>(1, counts_[a]));
  }

  /// ghat_i - beta (optimistic) when sign = -1, ghat_i + beta (pessimistic)
  /// when sign = +1.
  Vector shifted_means(std::size_t i, double sign) const {
    Vector out(k_);
    for (std::size_t a = 0; a < k_; ++a) out[a] = mean(i, a) + sign * radii_[a];
    return out;
  }

 private:
  std::size_t k_ = 0;
  std::size_t m_ = 0;
  double log_term_ = 0.0;
  std::vector<std::size_t> counts_;
  Matrix cost_sums_;
  Vector radii_;
};

/// Rows (ghat_i - beta)^T x <= bound_i, optionally with x(a) >= 1/T.
struct SafeSpaceSpec {
  enum class BoundKind { strict, relaxed };

  std::size_t dim = 0;
  Matrix coeffs;  // m rows of ghat_i - beta
  Vector bounds;
  BoundKind bound_kind = BoundKind::strict;
  double lower_bound = 0.0;  // 0 or 1/T

  std::size_t num_rows() const { return coeffs.size(); }

  Polytope to_polytope() const {
    Polytope p(dim);
    for (std::size_t i = 0; i < coeffs.size(); ++i) p.add_row(coeffs[i], bounds[i]);
    if (lower_bound > 0.0) p.set_uniform_lower(lower_bound);
    return p;
  }

  bool contains(const Strategy& x, double tol = 1e-9) const {
    for (std::size_t a = 0; a < dim; ++a) {
      if (x[a] < lower_bound - tol) return false;
    }
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      if (x.dot(coeffs[i]) > bounds[i] + tol) return false;
    }
    return true;
  }

  /// Emptiness is decided by the phase-1 LP. A cheap witness (uniform point)
  /// short-circuits the LP when it already lies inside.
  bool nonempty() const {
    if (dim == 0) return false;
    if (lower_bound * static_cast<double>(dim) <= 1.0 &&
        contains(Strategy::uniform(dim), /*tol=*/0.0)) {
      return true;
    }
    return feasibility_check(to_polytope());
  }
};

namespace detail {

inline SafeSpaceSpec optimistic_rows(const EstimatorState& est, std::span<const double> alphas,
                                     double shift) {
  if (alphas.size() != est.num_constraints()) throw ValidationError("alphas must have m entries");
  SafeSpaceSpec s;
  s.dim = est.num_actions();
  for (std::size_t i = 0; i < est.num_constraints(); ++i) {
    s.coeffs.push_back(est.shifted_means(i, -1.0));
    s.bounds.push_back(alphas[i] + shift);
  }
  return s;
}

}  // namespace detail

/// S_t: optimistic rows with bounds alpha_i.
inline SafeSpaceSpec strict_safe_space(const EstimatorState& est, std::span<const double> alphas) {
  return detail::optimistic_rows(est, alphas, 0.0);
}

/// S_t°: same rows with bounds relaxed to alpha_i + K/T.
inline SafeSpaceSpec relaxed_safe_space(const EstimatorState& est, std::span<const double> alphas,
                                        std::size_t horizon) {
  SafeSpaceSpec s = detail::optimistic_rows(
      est, alphas, static_cast<double>(est.num_actions()) / static_cast<double>(horizon));
  s.bound_kind = SafeSpaceSpec::BoundKind::relaxed;
  return s;
}

/// S~_t = Omega ∩ S_t°.
inline SafeSpaceSpec truncated_safe_space(const EstimatorState& est,
                                          std::span<const double> alphas, std::size_t horizon) {
  SafeSpaceSpec s = relaxed_safe_space(est, alphas, horizon);
  s.lower_bound = 1.0 / static_cast<double>(horizon);
  return s;
}

/// |ghat_i(a) - g_i(a)| <= beta(a) for every constraint and action.
inline bool clean_event_holds(const EstimatorState& est, const Matrix& true_means) {
  if (true_means.size() != est.num_constraints()) throw ValidationError("true means: m rows");
  for (std::size_t i = 0; i < est.num_constraints(); ++i) {
    for (std::size_t a = 0; a < est.num_actions(); ++a) {
      if (std::abs(est.mean(i, a) - true_means[i][a]) > est.radius(a)) return false;
    }
  }
  return true;
}

}  // namespace cmab
