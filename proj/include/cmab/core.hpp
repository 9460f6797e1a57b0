#pragma once

// Domain types shared by every module, plus the elementary strategy
// operations: sampling an action, mixing two strategies and the
// importance-weighted loss estimate.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cmab/error.hpp"

namespace cmab {

using Vector = std::vector<double>;
using Matrix = std::vector<std::vector<double>>;  // row-major, rows of equal length

// Absolute tolerance for simplex membership.
inline constexpr double kSimplexTol = 1e-9;
// Drift below this is silently renormalized; anything larger is a bug upstream.
inline constexpr double kRenormTol = 1e-7;

using Rng = std::mt19937_64;

// Uniform double in [0, 1) consuming exactly one 64-bit draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Independent sub-stream of a run seed; `tag` separates the environment's
// draws from the learner's so that algorithms compared on the same seed face
// the same loss and cost realizations.
inline Rng make_stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return Rng(seq);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// A point on the probability simplex over K actions.
///
/// Construction validates: every weight is finite and non-negative (values in
/// [-kSimplexTol, 0) are clipped to zero) and the weights sum to one within
/// kSimplexTol. Use `normalized` for the output of numeric routines, which may
/// carry a small accumulated drift.
class Strategy {
 public:
  Strategy() = default;

  explicit Strategy(Vector weights) : w_(std::move(weights)) {
    check_entries();
    const double s = sum();
    if (std::abs(s - 1.0) > kSimplexTol) {
      throw ValidationError("strategy weights sum to " + std::to_string(s) + ", expected 1");
    }
  }

  /// Renormalizes by the sum when it deviates from one by at most kRenormTol;
  /// larger deviations raise.
  static Strategy normalized(Vector weights) {
    Strategy x;
    x.w_ = std::move(weights);
    x.check_entries();
    const double s = x.sum();
    if (!(std::abs(s - 1.0) <= kRenormTol)) {
      throw ValidationError("strategy drifted off the simplex (sum " + std::to_string(s) + ")");
    }
    for (double& v : x.w_) v /= s;
    return x;
  }

  static Strategy uniform(std::size_t k) {
    if (k == 0) throw ValidationError("strategy needs at least one action");
    return Strategy(Vector(k, 1.0 / static_cast<double>(k)));
  }

  static Strategy vertex(std::size_t k, std::size_t a) {
    if (a >= k) throw ValidationError("vertex index out of range");
    Vector w(k, 0.0);
    w[a] = 1.0;
    return Strategy(std::move(w));
  }

  std::size_t size() const { return w_.size(); }
  bool empty() const { return w_.empty(); }
  double operator[](std::size_t a) const { return w_[a]; }
  std::span<const double> weights() const { return w_; }
  const Vector& vec() const { return w_; }

  /// Membership in the truncated simplex: every weight at least 1/T.
  bool truncated(std::size_t horizon, double tol = kSimplexTol) const {
    const double floor = 1.0 / static_cast<double>(horizon);
    for (double v : w_) {
      if (v < floor - tol) return false;
    }
    return true;
  }

  double dot(std::span<const double> v) const { return cmab::dot(w_, v); }

  friend bool operator==(const Strategy&, const Strategy&) = default;

 private:
  double sum() const { return std::accumulate(w_.begin(), w_.end(), 0.0); }

  void check_entries() {
    if (w_.empty()) throw ValidationError("strategy needs at least one action");
    for (double& v : w_) {
      if (!std::isfinite(v)) throw ValidationError("strategy weight is not finite");
      if (v < -kSimplexTol) throw ValidationError("strategy weight is negative");
      if (v < 0.0) v = 0.0;
    }
  }

  Vector w_;
};

/// Draws a ~ x by inverse CDF over cumulative weights. Exactly one uniform
/// draw is consumed; ties go to the lower index and zero-weight actions are
/// never returned.
inline std::size_t sample_action(const Strategy& x, Rng& rng) {
  if (x.empty()) throw ValidationError("sample_action: empty strategy");
  const double u = uniform01(rng);
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (x[a] <= 0.0) continue;
    last_positive = a;
    cum += x[a];
    if (u < cum) return a;
  }
  return last_positive;  // u landed in the rounding gap above the final cumulative sum
}

/// gamma * x_diamond + (1 - gamma) * x_tilde.
inline Strategy mix(double gamma, const Strategy& x_diamond, const Strategy& x_tilde) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("mix: gamma outside [0,1]");
  if (x_diamond.size() != x_tilde.size()) throw ValidationError("mix: size mismatch");
  Vector w(x_tilde.size());
  for (std::size_t a = 0; a < w.size(); ++a) {
    w[a] = gamma * x_diamond[a] + (1.0 - gamma) * x_tilde[a];
  }
  return Strategy::normalized(std::move(w));
}

/// Unbiased estimate of the full loss vector from the single observed entry.
inline Vector importance_loss_estimate(double loss_observed, std::size_t action,
                                       const Strategy& x_played) {
  if (action >= x_played.size()) throw ValidationError("importance estimate: action out of range");
  if (!(x_played[action] > 0.0)) {
    throw ValidationError("importance estimate: played action has zero probability");
  }
  Vector est(x_played.size(), 0.0);
  est[action] = loss_observed / x_played[action];
  return est;
}

/// Uniform draw from the truncated simplex {x : x(a) >= 1/T}: a flat
/// Dirichlet point d mapped through x = 1/T + (1 - K/T) d.
inline Strategy sample_truncated_simplex(std::size_t k, std::size_t horizon, Rng& rng) {
  if (horizon < k) throw ValidationError("truncated simplex is empty for T < K");
  Vector d(k);
  double total = 0.0;
  for (double& v : d) {
    v = -std::log1p(-uniform01(rng));  // Exp(1)
    total += v;
  }
  const double floor = 1.0 / static_cast<double>(horizon);
  const double scale = 1.0 - static_cast<double>(k) * floor;
  for (double& v : d) v = floor + scale * (v / total);
  return Strategy::normalized(std::move(d));
}

// ---------------------------------------------------------------------------
// Problem description

enum class CostFamily { bernoulli, beta };

/// Realized losses and costs of a whole run. Row t of `costs` holds m*K
/// values, row-major by constraint: costs[t][i*K + a].
struct LossCostSequence {
  std::size_t K = 0;
  std::size_t m = 0;
  Matrix losses;
  Matrix costs;

  std::size_t horizon() const { return losses.size(); }
  double cost(std::size_t t, std::size_t i, std::size_t a) const { return costs[t][i * K + a]; }
};

/// Parameters of the lower-bound construction (three actions, one constraint).
struct LowerBoundParams {
  double omega = 0.1;      // mean of W_t
  double gap_psi = -1.0;   // loss perturbation; negative = auto (1/4 sqrt(omega(1-omega)/T))
  double eps = -1.0;       // cost perturbation; negative = auto (1/6 sqrt(1/T))
  double rho_lb = 0.2;     // C_t ~ B(1/2 - rho_lb)
  double delta_gap = 0.0;  // loss offset of the third action
  std::size_t T = 1000;
};

// Loss sources. All are oblivious: the full loss sequence is drawn before
// the learner acts.
struct FixedSequence {  // losses and costs both given (e.g. loaded from CSV)
  LossCostSequence seq;
};
struct BernoulliLosses {  // i.i.d. Bernoulli(mean[a])
  Vector means;
};
struct PhasedLosses {  // equal-length phases, each i.i.d. Bernoulli with its own means
  Matrix phase_means;
};
struct SmallLossLosses {  // Bernoulli base instance, benchmark-support arms scaled by `level`
  Vector base_means;
  double level = 1.0;
};
struct LowerBoundLosses {  // instance nu_variant of the lower-bound family
  int variant = 1;
  LowerBoundParams params;
};

using LossSource =
    std::variant<FixedSequence, BernoulliLosses, PhasedLosses, SmallLossLosses, LowerBoundLosses>;

/// Full problem description.
struct InstanceSpec {
  std::size_t K = 2;
  std::size_t m = 1;
  std::size_t T = 1;
  double delta = 0.05;
  Vector alphas;
  LossSource loss_source;
  Matrix cost_means;  // m x K expected costs g_i(a)
  std::vector<CostFamily> cost_family;

  void validate() const {
    if (K < 2) throw ValidationError("instance needs K >= 2");
    if (m < 1) throw ValidationError("instance needs m >= 1");
    if (T < 1) throw ValidationError("instance needs T >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta must lie in (0,1)");
    if (alphas.size() != m) throw ValidationError("alphas must have m entries");
    for (double a : alphas) {
      if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("alphas must lie in [0,1]");
    }
    if (cost_means.size() != m) throw ValidationError("cost_means must have m rows");
    for (const auto& row : cost_means) {
      if (row.size() != K) throw ValidationError("cost_means rows must have K entries");
      for (double g : row) {
        if (!(g >= 0.0 && g <= 1.0)) throw ValidationError("cost_means entries must lie in [0,1]");
      }
    }
    if (!cost_family.empty() && cost_family.size() != m) {
      throw ValidationError("cost_family must be empty or have m entries");
    }
  }
};

/// The known max-margin strictly feasible strategy with its costs.
struct FeasibleAnchor {
  Strategy x_diamond;
  Vector thetas;     // g_i^T x_diamond
  double rho = 0.0;  // min_i (alpha_i - theta_i)
};

/// Per-round trajectory entry.
struct RoundRecord {
  std::size_t t = 0;  // 1-based round index
  std::size_t action = 0;
  double loss_observed = 0.0;
  Vector costs_observed;  // m values
  Strategy strategy_played;
  Strategy strategy_omd;   // OMD iterate behind the played strategy (equal to it for COLB)
  double gamma = 0.0;      // weight on the anchor inside strategy_played (SOLB)
  bool safe_space_empty = false;
  Vector expected_costs_played;  // g_i^T strategy_played, for metrics
  double kkt_residual = 0.0;     // of this round's OMD step (0 when skipped)
  double eta_max = 0.0;          // max_a eta_{t+1,a} after this round's update
};

inline Vector expected_costs(const Matrix& cost_means, const Strategy& x) {
  Vector out(cost_means.size());
  for (std::size_t i = 0; i < cost_means.size(); ++i) out[i] = x.dot(cost_means[i]);
  return out;
}

}  // namespace cmab
