#pragma once

// COLB (soft constraints) and SOLB (hard constraints) learners, the
// theoretical learning-rate choice and a doubling-trick wrapper for when the
// benchmark loss is unknown.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmab/core.hpp"
#include "cmab/error.hpp"
#include "cmab/estimation.hpp"
#include "cmab/omd.hpp"

namespace cmab {

struct ProblemParams {
  std::size_t K = 2;
  std::size_t m = 1;
  std::size_t T = 1;
  double delta = 0.05;
  Vector alphas;

  void validate() const {
    if (K < 2 || m < 1) throw ConfigError("learner needs K >= 2 and m >= 1");
    if (alphas.size() != m) throw ConfigError("learner needs m thresholds");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    // Omega = {x >= 1/T} has an interior only for T > K. A one-round run
    // never updates, so it is allowed as well.
    if (T != 1 && T <= K) throw ConfigError("horizon must exceed the number of actions");
  }
};

struct Feedback {
  std::size_t action = 0;
  double loss = 0.0;
  Vector costs;  // m observed costs of the played action
};

// Outcome of the strategy update inside one round.
struct StepInfo {
  bool space_empty = false;
  double kkt_residual = 0.0;
  int newton_iterations = 0;
};

struct ColbState {
  Strategy x;
  LrSchedule sched;
  EstimatorState est;
  std::size_t round = 1;
  StepInfo last;
};

struct SolbState {
  Strategy x_tilde;
  Strategy x_play;
  double gamma = 0.0;
  FeasibleAnchor anchor;
  LrSchedule sched;
  EstimatorState est;
  std::size_t round = 1;
  StepInfo last;
};

/// Weight on the anchor that brings the pessimistic cost of the mixture back
/// to the threshold. `pessimistic` holds (ghat_i + beta)^T x_tilde; values
/// above one are clamped here.
inline double combination_factor(std::span<const double> pessimistic, std::span<const double> alphas,
                                 std::span<const double> thetas) {
  if (pessimistic.size() != alphas.size() || thetas.size() != alphas.size()) {
    throw ValidationError("combination_factor: size mismatch");
  }
  double gamma = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(thetas[i] < alphas[i])) {
      throw ValidationError("combination_factor: anchor cost must be strictly below the threshold");
    }
    const double p = std::min(pessimistic[i], 1.0);
    if (pessimistic[i] > alphas[i]) gamma = std::max(gamma, (p - alphas[i]) / (p - thetas[i]));
  }
  return gamma;
}

enum class EtaMode { soft, hard };

namespace detail {

// ceil that ignores floating noise just above an integer (ln(e^3) may come
// out as 3.0000000000000004).
inline double tolerant_ceil(double v) { return std::ceil(v - 1e-9 * std::max(1.0, std::abs(v))); }

}  // namespace detail

inline double eta_log_factor_h(double horizon, double delta) {
  const double lt = std::log(horizon);
  return std::log(detail::tolerant_ceil(lt) * detail::tolerant_ceil(3.0 * lt) / delta);
}

/// The benchmark-loss term of the theoretical rate alone:
/// sqrt(K / (L* ln(1/delta))) with L* floored at 1.
inline double smallloss_eta(std::size_t K, double delta, double l_star) {
  return std::sqrt(static_cast<double>(K) / (std::max(l_star, 1.0) * std::log(1.0 / delta)));
}

/// eta = min{ c / (40 H ln T ln(H/delta)), sqrt(K / (L* ln(1/delta))) } with
/// c = 1 (soft) or rho (hard) and L* floored at 1.
inline double theoretical_eta(EtaMode mode, double rho, std::size_t T, double delta, std::size_t K,
                              double l_star) {
  if (T < 2) throw ConfigError("theoretical learning rate needs T >= 2");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
  const double horizon = static_cast<double>(T);
  double numerator = 1.0;
  if (mode == EtaMode::hard) {
    if (!(rho >= 12.0 * static_cast<double>(K) / horizon)) {
      throw ConfigError("hard-constraint learning rate needs rho >= 12K/T (rho = " +
                        std::to_string(rho) + ")");
    }
    numerator = rho;
  }
  const double h = eta_log_factor_h(horizon, delta);
  const double first = numerator / (40.0 * h * std::log(horizon) * std::log(h / delta));
  return std::min(first, smallloss_eta(K, delta, l_star));
}

namespace detail {

inline Vector pessimistic_costs(const EstimatorState& est, const Strategy& x) {
  Vector out(est.num_constraints());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.dot(est.shifted_means(i, +1.0));
  return out;
}

// Shared OMD half of both algorithms: update x (in place) and the schedule
// given the loss estimate, or resample from Omega when the space is empty.
inline StepInfo omd_half(Strategy& x, LrSchedule& sched, const EstimatorState& est,
                         std::span<const double> loss_estimate, const ProblemParams& p, Rng& rng) {
  StepInfo info;
  const SafeSpaceSpec space = truncated_safe_space(est, p.alphas, p.T);
  if (!space.nonempty()) {
    info.space_empty = true;
    x = sample_truncated_simplex(p.K, p.T, rng);
    return info;
  }
  OmdResult r = omd_step(loss_estimate, x, sched, space);
  info.kkt_residual = r.kkt_residual;
  info.newton_iterations = r.newton_iterations;
  x = std::move(r.point);
  sched = lr_update(x, std::move(sched));
  return info;
}

}  // namespace detail

inline ColbState colb_init(const ProblemParams& p, double eta) {
  p.validate();
  ColbState s;
  s.x = Strategy::uniform(p.K);
  s.sched = LrSchedule::initial(p.K, p.T, eta);
  s.est = EstimatorState(p.K, p.m, p.T, p.delta);
  return s;
}

/// One COLB round given the feedback of playing state.x. Returns the strategy
/// to play next.
inline const Strategy& colb_round(ColbState& s, const ProblemParams& p, const Feedback& fb, Rng& rng) {
  s.est.update(fb.action, fb.costs);
  const Vector lhat = importance_loss_estimate(fb.loss, fb.action, s.x);
  s.last = detail::omd_half(s.x, s.sched, s.est, lhat, p, rng);
  ++s.round;
  return s.x;
}

inline SolbState solb_init(const ProblemParams& p, double eta, FeasibleAnchor anchor) {
  p.validate();
  if (anchor.x_diamond.size() != p.K || anchor.thetas.size() != p.m) {
    throw ConfigError("anchor does not match the instance dimensions");
  }
  SolbState s;
  s.x_tilde = Strategy::uniform(p.K);
  s.sched = LrSchedule::initial(p.K, p.T, eta);
  s.est = EstimatorState(p.K, p.m, p.T, p.delta);
  for (std::size_t i = 0; i < p.m; ++i) {
    if (!(anchor.thetas[i] < p.alphas[i])) throw FeasibilityError("anchor is not strictly feasible");
    s.gamma = std::max(s.gamma, (1.0 - p.alphas[i]) / (1.0 - anchor.thetas[i]));
  }
  s.anchor = std::move(anchor);
  s.x_play = mix(s.gamma, s.anchor.x_diamond, s.x_tilde);
  return s;
}

/// One SOLB round given the feedback of playing state.x_play. Order:
/// estimate, OMD on x_tilde, combination factor, mixture.
inline const Strategy& solb_round(SolbState& s, const ProblemParams& p, const Feedback& fb, Rng& rng) {
  s.est.update(fb.action, fb.costs);
  const Vector lhat = importance_loss_estimate(fb.loss, fb.action, s.x_play);
  s.last = detail::omd_half(s.x_tilde, s.sched, s.est, lhat, p, rng);
  if (s.last.space_empty) {
    s.gamma = 1.0;
  } else {
    s.gamma = combination_factor(detail::pessimistic_costs(s.est, s.x_tilde), p.alphas,
                                 s.anchor.thetas);
  }
  s.x_play = mix(s.gamma, s.anchor.x_diamond, s.x_tilde);
  ++s.round;
  return s.x_play;
}

// ---------------------------------------------------------------------------
// Polymorphic learners for the harness.

class Learner {
 public:
  virtual ~Learner() = default;

  /// Strategy to play in the current round.
  virtual const Strategy& strategy() const = 0;
  /// OMD iterate behind strategy() (the same point for COLB).
  virtual const Strategy& omd_iterate() const = 0;
  virtual double gamma() const = 0;

  /// Full round update from the feedback of playing strategy().
  virtual void update(const Feedback& fb, Rng& rng) = 0;
  /// Feed the estimator only (after the last round no next strategy is needed).
  virtual void observe_last(const Feedback& fb) = 0;

  virtual const EstimatorState& estimator() const = 0;
  virtual const LrSchedule& schedule() const = 0;
  virtual const StepInfo& last_step() const = 0;

  /// Reset the OMD iterate and the schedule with a new base rate; the
  /// estimator is kept.
  virtual void restart(double eta) = 0;
  virtual std::size_t restarts() const { return 0; }
  virtual std::string name() const = 0;
};

class ColbLearner final : public Learner {
 public:
  ColbLearner(ProblemParams p, double eta) : p_(std::move(p)), s_(colb_init(p_, eta)) {}

  const Strategy& strategy() const override { return s_.x; }
  const Strategy& omd_iterate() const override { return s_.x; }
  double gamma() const override { return 0.0; }
  void update(const Feedback& fb, Rng& rng) override { colb_round(s_, p_, fb, rng); }
  void observe_last(const Feedback& fb) override { s_.est.update(fb.action, fb.costs); }
  const EstimatorState& estimator() const override { return s_.est; }
  const LrSchedule& schedule() const override { return s_.sched; }
  const StepInfo& last_step() const override { return s_.last; }
  void restart(double eta) override {
    s_.x = Strategy::uniform(p_.K);
    s_.sched = LrSchedule::initial(p_.K, p_.T, eta);
  }
  std::string name() const override { return "colb"; }

  const ColbState& state() const { return s_; }

 private:
  ProblemParams p_;
  ColbState s_;
};

class SolbLearner final : public Learner {
 public:
  SolbLearner(ProblemParams p, double eta, FeasibleAnchor anchor)
      : p_(std::move(p)), s_(solb_init(p_, eta, std::move(anchor))) {}

  const Strategy& strategy() const override { return s_.x_play; }
  const Strategy& omd_iterate() const override { return s_.x_tilde; }
  double gamma() const override { return s_.gamma; }
  void update(const Feedback& fb, Rng& rng) override { solb_round(s_, p_, fb, rng); }
  void observe_last(const Feedback& fb) override { s_.est.update(fb.action, fb.costs); }
  const EstimatorState& estimator() const override { return s_.est; }
  const LrSchedule& schedule() const override { return s_.sched; }
  const StepInfo& last_step() const override { return s_.last; }
  void restart(double eta) override {
    s_.x_tilde = Strategy::uniform(p_.K);
    s_.sched = LrSchedule::initial(p_.K, p_.T, eta);
    s_.gamma = combination_factor(detail::pessimistic_costs(s_.est, s_.x_tilde), p_.alphas,
                                  s_.anchor.thetas);
    s_.x_play = mix(s_.gamma, s_.anchor.x_diamond, s_.x_tilde);
  }
  std::string name() const override { return "solb"; }

  const SolbState& state() const { return s_; }

 private:
  ProblemParams p_;
  SolbState s_;
};

/// Doubling trick on the benchmark loss: a guess G (initially 1) stands in
/// for L*, and whenever the cumulative played loss exceeds G the guess
/// doubles and the inner learner restarts with eta_for(G).
class DoublingEtaLearner final : public Learner {
 public:
  using EtaForGuess = std::function<double(double)>;

  DoublingEtaLearner(std::unique_ptr<Learner> inner, EtaForGuess eta_for)
      : inner_(std::move(inner)), eta_for_(std::move(eta_for)) {}

  /// Builds the inner learner through `factory(eta_for(1))`.
  template <class Factory>
  static std::unique_ptr<DoublingEtaLearner> create(Factory&& factory, EtaForGuess eta_for) {
    auto inner = factory(eta_for(1.0));
    return std::make_unique<DoublingEtaLearner>(std::move(inner), std::move(eta_for));
  }

  const Strategy& strategy() const override { return inner_->strategy(); }
  const Strategy& omd_iterate() const override { return inner_->omd_iterate(); }
  double gamma() const override { return inner_->gamma(); }

  void update(const Feedback& fb, Rng& rng) override {
    inner_->update(fb, rng);
    if (advance(fb.loss)) inner_->restart(eta_for_(guess_));
  }

  void observe_last(const Feedback& fb) override {
    inner_->observe_last(fb);
    advance(fb.loss);
  }

  const EstimatorState& estimator() const override { return inner_->estimator(); }
  const LrSchedule& schedule() const override { return inner_->schedule(); }
  const StepInfo& last_step() const override { return inner_->last_step(); }
  void restart(double eta) override { inner_->restart(eta); }
  std::size_t restarts() const override { return restarts_; }
  std::string name() const override { return inner_->name() + "-doubling"; }

  double guess() const { return guess_; }
  double cumulative_loss() const { return cumulative_; }

 private:
  bool advance(double loss) {
    cumulative_ += loss;
    bool doubled = false;
    while (cumulative_ > guess_) {
      guess_ *= 2.0;
      ++restarts_;
      doubled = true;
    }
    return doubled;
  }

  std::unique_ptr<Learner> inner_;
  EtaForGuess eta_for_;
  double guess_ = 1.0;
  double cumulative_ = 0.0;
  std::size_t restarts_ = 0;
};

}  // namespace cmab
