#pragma once

// Loss and cost generators. Every environment is oblivious: the whole
// sequence is drawn up front from the environment's own random stream, so
// the same seed yields the same realizations regardless of the learner.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <system_error>
#include <variant>
#include <vector>

#include "cmab/core.hpp"
#include "cmab/error.hpp"
#include "cmab/lp.hpp"

namespace cmab {

inline bool bernoulli(double p, Rng& rng) { return uniform01(rng) < p; }

/// One cost draw with the given mean. Beta(2 mu, 2 (1 - mu)) keeps the mean
/// and lives in [0,1]; mu in {0, 1} is a point mass.
inline double stochastic_cost_sample(double mean, CostFamily family, Rng& rng) {
  if (!(mean >= 0.0 && mean <= 1.0)) throw ValidationError("cost mean outside [0,1]");
  switch (family) {
    case CostFamily::bernoulli:
      return bernoulli(mean, rng) ? 1.0 : 0.0;
    case CostFamily::beta: {
      if (mean == 0.0 || mean == 1.0) return mean;
      std::gamma_distribution<double> ga(2.0 * mean, 1.0);
      std::gamma_distribution<double> gb(2.0 * (1.0 - mean), 1.0);
      const double x = ga(rng);
      const double y = gb(rng);
      return (x + y) > 0.0 ? x / (x + y) : mean;
    }
  }
  throw ValidationError("unsupported cost family");
}

/// Full m x K cost draw for one round, row-major by constraint.
inline Vector sample_cost_row(const Matrix& cost_means, const std::vector<CostFamily>& families,
                              Rng& rng) {
  Vector row;
  for (std::size_t i = 0; i < cost_means.size(); ++i) {
    const CostFamily f = families.empty() ? CostFamily::bernoulli : families[i];
    for (double mu : cost_means[i]) row.push_back(stochastic_cost_sample(mu, f, rng));
  }
  return row;
}

// ---------------------------------------------------------------------------
// Lower-bound family (three actions, one constraint, threshold 1/2).

inline constexpr double kLowerBoundAlpha = 0.5;

inline double lb_gap_psi(const LowerBoundParams& p) {
  if (p.gap_psi >= 0.0) return p.gap_psi;
  return 0.25 * std::sqrt(p.omega * (1.0 - p.omega) / static_cast<double>(p.T));
}

inline double lb_eps(const LowerBoundParams& p) {
  if (p.eps >= 0.0) return p.eps;
  return std::sqrt(1.0 / static_cast<double>(p.T)) / 6.0;
}

inline void lb_validate(int variant, const LowerBoundParams& p) {
  if (variant < 1 || variant > 4) throw ValidationError("lower-bound variant must be 1..4");
  if (!(p.omega > 0.0 && p.omega < 0.5)) throw ValidationError("omega must lie in (0, 1/2)");
  if (!(p.rho_lb > 0.0 && p.rho_lb < 0.5)) throw ValidationError("rho must lie in (0, 1/2)");
  if (!(p.delta_gap >= 0.0 && p.delta_gap <= 1.0)) throw ValidationError("Delta must lie in [0,1]");
  if (p.T < 1) throw ValidationError("lower-bound instance needs T >= 1");
  const double psi = lb_gap_psi(p);
  const double eps = lb_eps(p);
  if (!(psi > 0.0 && psi < 1.0 - p.omega)) throw ValidationError("psi must lie in (0, 1 - omega)");
  if (!(eps > 0.0 && eps < 0.5)) throw ValidationError("eps must lie in (0, 1/2)");
}

/// Expected losses of the three actions.
inline Vector lb_loss_means(int variant, const LowerBoundParams& p) {
  lb_validate(variant, p);
  const double w = p.omega / 2.0;
  const double y = (p.omega + lb_gap_psi(p)) / 2.0;
  const double third = (p.omega + p.delta_gap) / 2.0;
  switch (variant) {
    case 1: return {w, w, third};
    case 2: return {w, y, third};
    case 3: return {y, w, third};
    default: return {y, y, third};
  }
}

/// 1 x 3 expected costs.
inline Matrix lb_cost_means(int variant, const LowerBoundParams& p) {
  lb_validate(variant, p);
  const double c = 0.5 - p.rho_lb;
  if (variant == 1) {
    const double d = 0.5 + lb_eps(p);
    return {{d, d, c}};
  }
  return {{0.5, 0.5, c}};
}

/// Draws W, Y, B, C, D once per round (always in this order, whatever the
/// variant) and assembles the variant's row.
inline LossCostSequence lb_instance(int variant, const LowerBoundParams& p, Rng& rng) {
  lb_validate(variant, p);
  const double psi = lb_gap_psi(p);
  const double eps = lb_eps(p);
  LossCostSequence seq{3, 1, {}, {}};
  seq.losses.reserve(p.T);
  seq.costs.reserve(p.T);
  for (std::size_t t = 0; t < p.T; ++t) {
    const double w = bernoulli(p.omega, rng) ? 1.0 : 0.0;
    const double y = bernoulli(p.omega + psi, rng) ? 1.0 : 0.0;
    const double b = bernoulli(0.5, rng) ? 1.0 : 0.0;
    const double c = bernoulli(0.5 - p.rho_lb, rng) ? 1.0 : 0.0;
    const double d = bernoulli(0.5 + eps, rng) ? 1.0 : 0.0;
    const double third = (w + p.delta_gap) / 2.0;
    switch (variant) {
      case 1:
        seq.losses.push_back({w / 2.0, w / 2.0, third});
        seq.costs.push_back({d, d, c});
        break;
      case 2:
        seq.losses.push_back({w / 2.0, y / 2.0, third});
        seq.costs.push_back({b, b, c});
        break;
      case 3:
        seq.losses.push_back({y / 2.0, w / 2.0, third});
        seq.costs.push_back({b, b, c});
        break;
      default:
        seq.losses.push_back({y / 2.0, y / 2.0, third});
        seq.costs.push_back({b, b, c});
        break;
    }
  }
  return seq;
}

/// Conditions under which the lower-bound construction applies:
/// T >= max{2, (11 + ln T)(8/3)^2} and omega in [max{1, 11/2 + ln T}/T, 1/2].
inline bool lb_conditions_hold(double omega, std::size_t T) {
  const double t = static_cast<double>(T);
  const double lt = std::log(t);
  if (t < std::max(2.0, (11.0 + lt) * (64.0 / 9.0))) return false;
  return omega >= std::max(1.0, 5.5 + lt) / t && omega <= 0.5;
}

struct BallSpec {
  double omega = 0.0;
  double delta_gap = 0.0;
  std::size_t T = 1;
};

/// sum_t l_t^T x* / T <= omega and sum_t (l_t^T (x_diamond - x*))^2 / T <= Delta^2.
inline bool ball_membership(const Matrix& losses, const Strategy& x_star, const Strategy& x_diamond,
                            const BallSpec& spec) {
  constexpr double kTol = 1e-9;
  const double t = static_cast<double>(spec.T);
  double star = 0.0;
  double gap2 = 0.0;
  for (const auto& l : losses) {
    const double ls = x_star.dot(l);
    const double gap = x_diamond.dot(l) - ls;
    star += ls;
    gap2 += gap * gap;
  }
  return star / t <= spec.omega + kTol && gap2 / t <= spec.delta_gap * spec.delta_gap + kTol;
}

// ---------------------------------------------------------------------------
// Stochastic and oblivious adversarial loss streams.

inline Matrix bernoulli_losses(const Vector& means, std::size_t T, Rng& rng) {
  Matrix out(T, Vector(means.size()));
  for (auto& row : out) {
    for (std::size_t a = 0; a < means.size(); ++a) row[a] = bernoulli(means[a], rng) ? 1.0 : 0.0;
  }
  return out;
}

/// Equal-length phases (the last one absorbs the remainder), each with its
/// own Bernoulli means; the best arm can switch between phases.
inline Matrix phased_losses(const Matrix& phase_means, std::size_t T, Rng& rng) {
  if (phase_means.empty()) throw ValidationError("phased losses need at least one phase");
  const std::size_t len = std::max<std::size_t>(1, T / phase_means.size());
  Matrix out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Vector& mu = phase_means[std::min(t / len, phase_means.size() - 1)];
    Vector row(mu.size());
    for (std::size_t a = 0; a < mu.size(); ++a) row[a] = bernoulli(mu[a], rng) ? 1.0 : 0.0;
    out.push_back(std::move(row));
  }
  return out;
}

inline Vector empirical_mean_loss(const Matrix& losses) {
  if (losses.empty()) throw ValidationError("empty loss sequence");
  Vector mean(losses.front().size(), 0.0);
  for (const auto& row : losses) {
    for (std::size_t a = 0; a < mean.size(); ++a) mean[a] += row[a];
  }
  for (double& v : mean) v /= static_cast<double>(losses.size());
  return mean;
}

/// Hindsight benchmark: x* solves the offline LP on the realized mean loss
/// and L* = T * OPT.
struct Benchmark {
  Strategy x_star;
  double opt = 0.0;     // per-round value
  double l_star = 0.0;  // sum_t l_t^T x*
};

inline Benchmark hindsight_benchmark(const Matrix& losses, const Matrix& cost_means,
                                     std::span<const double> alphas) {
  const Vector mean = empirical_mean_loss(losses);
  const LpSolution sol = solve_offline_opt(mean, cost_means, alphas);
  if (!sol.optimal()) throw FeasibilityError("offline problem is infeasible");
  Benchmark b;
  b.x_star = sol.point;
  b.opt = sol.objective;
  b.l_star = 0.0;
  for (const auto& row : losses) b.l_star += b.x_star.dot(row);
  return b;
}

/// Bernoulli base instance whose benchmark-support arms (those x* uses on the
/// base means) have their losses scaled by `level`, so that L* moves
/// proportionally to the level.
inline Matrix smallloss_losses(const Vector& base_means, double level, const Matrix& cost_means,
                               std::span<const double> alphas, std::size_t T, Rng& rng) {
  if (!(level >= 0.0 && level <= 1.0)) throw ValidationError("small-loss level must lie in [0,1]");
  const LpSolution base = solve_offline_opt(base_means, cost_means, alphas);
  if (!base.optimal()) throw FeasibilityError("small-loss base instance is infeasible");
  Matrix losses = bernoulli_losses(base_means, T, rng);
  for (auto& row : losses) {
    for (std::size_t a = 0; a < row.size(); ++a) {
      if (base.point[a] > 1e-9) row[a] *= level;
    }
  }
  return losses;
}

struct SmallLossInstance {
  LossCostSequence seq;
  double realized_l_star = 0.0;
};

inline SmallLossInstance smallloss_family(double level, const Vector& base_means,
                                          const Matrix& cost_means, std::span<const double> alphas,
                                          std::size_t T, Rng& rng,
                                          const std::vector<CostFamily>& families = {}) {
  SmallLossInstance out;
  out.seq.K = base_means.size();
  out.seq.m = cost_means.size();
  out.seq.losses = smallloss_losses(base_means, level, cost_means, alphas, T, rng);
  for (std::size_t t = 0; t < T; ++t) out.seq.costs.push_back(sample_cost_row(cost_means, families, rng));
  out.realized_l_star = hindsight_benchmark(out.seq.losses, cost_means, alphas).l_star;
  return out;
}

/// Instance description of lower-bound variant `variant` (costs and
/// thresholds come from the table, not from the caller).
inline InstanceSpec lower_bound_spec(int variant, const LowerBoundParams& p, double delta) {
  InstanceSpec s;
  s.K = 3;
  s.m = 1;
  s.T = p.T;
  s.delta = delta;
  s.alphas = {kLowerBoundAlpha};
  s.loss_source = LowerBoundLosses{variant, p};
  s.cost_means = lb_cost_means(variant, p);
  s.cost_family = {CostFamily::bernoulli};
  return s;
}

/// Draws the whole loss and cost sequence of an instance. Losses are drawn
/// before costs.
inline LossCostSequence materialize(const InstanceSpec& spec, Rng& rng) {
  spec.validate();
  if (const auto* lb = std::get_if<LowerBoundLosses>(&spec.loss_source)) {
    LowerBoundParams p = lb->params;
    p.T = spec.T;
    return lb_instance(lb->variant, p, rng);
  }
  if (const auto* fixed = std::get_if<FixedSequence>(&spec.loss_source)) {
    const LossCostSequence& s = fixed->seq;
    if (s.K != spec.K || s.m != spec.m || s.horizon() < spec.T) {
      throw ValidationError("loaded sequence does not match the instance dimensions");
    }
    LossCostSequence out{s.K, s.m, Matrix(s.losses.begin(), s.losses.begin() + static_cast<long>(spec.T)),
                         Matrix(s.costs.begin(), s.costs.begin() + static_cast<long>(spec.T))};
    return out;
  }
  LossCostSequence seq{spec.K, spec.m, {}, {}};
  std::visit(
      [&](const auto& src) {
        using S = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<S, BernoulliLosses>) {
          if (src.means.size() != spec.K) throw ValidationError("loss means must have K entries");
          seq.losses = bernoulli_losses(src.means, spec.T, rng);
        } else if constexpr (std::is_same_v<S, PhasedLosses>) {
          for (const auto& ph : src.phase_means) {
            if (ph.size() != spec.K) throw ValidationError("phase means must have K entries");
          }
          seq.losses = phased_losses(src.phase_means, spec.T, rng);
        } else if constexpr (std::is_same_v<S, SmallLossLosses>) {
          if (src.base_means.size() != spec.K) throw ValidationError("base means must have K entries");
          seq.losses = smallloss_losses(src.base_means, src.level, spec.cost_means, spec.alphas,
                                        spec.T, rng);
        }
      },
      spec.loss_source);
  seq.costs.reserve(spec.T);
  for (std::size_t t = 0; t < spec.T; ++t) {
    seq.costs.push_back(sample_cost_row(spec.cost_means, spec.cost_family, rng));
  }
  return seq;
}

/// Optional adaptive adversary: may overwrite round t's losses (0-based)
/// after seeing the actions played so far. None ships with the library.
using AdaptiveAdversary = std::function<void(std::size_t t, const std::vector<std::size_t>& actions,
                                             Vector& losses)>;

// ---------------------------------------------------------------------------
// CSV sequence files: header `t,loss_0..loss_{K-1},g_0_0..g_{m-1}_{K-1}`,
// one row per round with t counted from 1.

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_sequence_csv(std::ostream& os, const LossCostSequence& seq) {
  os << 't';
  for (std::size_t a = 0; a < seq.K; ++a) os << ",loss_" << a;
  for (std::size_t i = 0; i < seq.m; ++i) {
    for (std::size_t a = 0; a < seq.K; ++a) os << ",g_" << i << '_' << a;
  }
  os << '\n';
  for (std::size_t t = 0; t < seq.horizon(); ++t) {
    os << (t + 1);
    for (double v : seq.losses[t]) os << ',' << format_double(v);
    for (double v : seq.costs[t]) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_sequence_csv(const std::string& path, const LossCostSequence& seq) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_sequence_csv(os, seq);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("malformed number in sequence file: '" + s + "'");
  }
  return v;
}

}  // namespace detail

/// Reads a sequence file; K and m are recovered from the header.
inline LossCostSequence read_sequence_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("sequence file is empty");
  const auto header = detail::split_csv(line);
  if (header.empty() || header[0] != "t") throw ConfigError("sequence header must start with 't'");
  std::size_t k = 0;
  while (1 + k < header.size() && header[1 + k] == "loss_" + std::to_string(k)) ++k;
  const std::size_t rest = header.size() - 1 - k;
  if (k < 2 || rest == 0 || rest % k != 0) throw ConfigError("malformed sequence header");
  const std::size_t m = rest / k;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      const std::string want = "g_" + std::to_string(i) + "_" + std::to_string(a);
      if (header[1 + k + i * k + a] != want) throw ConfigError("expected column " + want);
    }
  }
  LossCostSequence seq{k, m, {}, {}};
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size()) throw ConfigError("sequence row has the wrong number of cells");
    if (detail::parse_double(cells[0]) != static_cast<double>(seq.horizon() + 1)) {
      throw ConfigError("sequence rows must be numbered 1, 2, ...");
    }
    Vector losses(k);
    Vector costs(m * k);
    for (std::size_t a = 0; a < k; ++a) losses[a] = detail::parse_double(cells[1 + a]);
    for (std::size_t j = 0; j < m * k; ++j) costs[j] = detail::parse_double(cells[1 + k + j]);
    for (double v : losses) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("losses must lie in [0,1]");
    }
    for (double v : costs) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("costs must lie in [0,1]");
    }
    seq.losses.push_back(std::move(losses));
    seq.costs.push_back(std::move(costs));
  }
  if (seq.horizon() == 0) throw ConfigError("sequence file has no rounds");
  return seq;
}

inline LossCostSequence read_sequence_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open sequence file " + path);
  return read_sequence_csv(is);
}

}  // namespace cmab
