#pragma once

// Experiment orchestration: seeded runs, regret and violation curves,
// scaling sweeps and file outputs.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmab/algorithms.hpp"
#include "cmab/core.hpp"
#include "cmab/environments.hpp"
#include "cmab/error.hpp"
#include "cmab/lp.hpp"

namespace cmab {

enum class Algorithm { colb, solb, colb_doubling, solb_doubling };

inline bool is_doubling(Algorithm a) {
  return a == Algorithm::colb_doubling || a == Algorithm::solb_doubling;
}
inline bool is_hard(Algorithm a) { return a == Algorithm::solb || a == Algorithm::solb_doubling; }

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::colb: return "colb";
    case Algorithm::solb: return "solb";
    case Algorithm::colb_doubling: return "colb-doubling";
    case Algorithm::solb_doubling: return "solb-doubling";
  }
  return "?";
}

struct EtaSpec {
  // oracle: the theoretical rate with the realized L*; oracle_loss: only its
  // sqrt(K / (L* ln(1/delta))) term, which is the active one once T is large.
  enum class Mode { oracle, oracle_loss, doubling, fixed };
  Mode mode = Mode::oracle;
  double value = 0.0;  // used when mode == fixed
};

struct RunConfig {
  InstanceSpec instance;
  Algorithm algorithm = Algorithm::colb;
  EtaSpec eta;
  std::vector<std::uint64_t> seeds{1};
  std::string output;
  unsigned threads = 1;
  bool plot = false;
  bool keep_records = false;        // keep the full RoundRecord trajectory per seed
  AdaptiveAdversary adversary;      // optional; none ships with the library
};

/// Per-seed results. Curves are indexed by round (entry t-1 is the value
/// after round t).
struct RunMetrics {
  std::uint64_t seed = 0;
  std::size_t T = 0;

  Vector regret_cum;          // sum_{s<=t} l_s^T x_s - t OPT
  Vector regret_sampled_cum;  // sum_{s<=t} l_s(a_s) - t OPT
  Vector violation_cum;       // max_i sum_{s<=t} [g_i^T x_s - alpha_i]^+
  Vector gamma;
  Vector eta_max;
  std::vector<char> safe_empty;

  std::optional<std::size_t> safety_breach_round;  // first t with g_i^T x_t > alpha_i
  bool clean_event_ok = true;
  Vector eta_final;
  double eta_base = 0.0;       // base rate of the last epoch
  double eta_ratio_max = 0.0;  // max over rounds of max_a eta_{t,a} / eta_base
  double kkt_max = 0.0;
  std::size_t restarts = 0;
  std::size_t empty_rounds = 0;

  double opt = 0.0;
  double l_star = 0.0;
  Strategy x_star;
  double regret_intended = std::numeric_limits<double>::quiet_NaN();  // vs generator means

  // SOLB: sum gamma_{t-1} l_t^T (x_diamond - x*) and sum (1 - gamma_{t-1}) l_t^T (x~_t - x*).
  double decomposition_anchor = 0.0;
  double decomposition_omd = 0.0;

  std::vector<RoundRecord> records;  // only with keep_records

  double regret_final() const { return regret_cum.empty() ? 0.0 : regret_cum.back(); }
  double regret_sampled_final() const {
    return regret_sampled_cum.empty() ? 0.0 : regret_sampled_cum.back();
  }
  double violation_final() const { return violation_cum.empty() ? 0.0 : violation_cum.back(); }
};

// ---------------------------------------------------------------------------
// Metric curves.

struct RegretCurve {
  Vector expected;
  Vector sampled;
  double opt = 0.0;
  Strategy x_star;
  double l_star = 0.0;
};

/// Hindsight regret of a trajectory: OPT and x* come from the LP on the
/// realized average loss.
inline RegretCurve compute_regret(const std::vector<RoundRecord>& records, const Matrix& losses,
                                  const Matrix& cost_means, std::span<const double> alphas) {
  if (records.size() > losses.size()) throw ValidationError("more records than loss rows");
  RegretCurve c;
  if (records.empty()) return c;
  const Matrix used(losses.begin(), losses.begin() + static_cast<long>(records.size()));
  const Benchmark b = hindsight_benchmark(used, cost_means, alphas);
  c.opt = b.opt;
  c.x_star = b.x_star;
  c.l_star = b.l_star;
  double e = 0.0;
  double s = 0.0;
  for (std::size_t t = 0; t < records.size(); ++t) {
    e += records[t].strategy_played.dot(used[t]) - b.opt;
    s += records[t].loss_observed - b.opt;
    c.expected.push_back(e);
    c.sampled.push_back(s);
  }
  return c;
}

/// V_t = max_i sum_{s<=t} [g_i^T x_s - alpha_i]^+ for every prefix.
inline Vector compute_violations(const std::vector<RoundRecord>& records, const Matrix& cost_means,
                                 std::span<const double> alphas) {
  Vector per(alphas.size(), 0.0);
  Vector out;
  out.reserve(records.size());
  for (const auto& r : records) {
    double v = 0.0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
      per[i] += std::max(0.0, r.strategy_played.dot(cost_means[i]) - alphas[i]);
      v = std::max(v, per[i]);
    }
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Learner construction.

namespace detail {

// Generator means of the loss stream, when they are known.
inline std::optional<Vector> intended_loss_means(const InstanceSpec& spec) {
  if (const auto* b = std::get_if<BernoulliLosses>(&spec.loss_source)) return b->means;
  if (const auto* lb = std::get_if<LowerBoundLosses>(&spec.loss_source)) {
    LowerBoundParams p = lb->params;
    p.T = spec.T;
    return lb_loss_means(lb->variant, p);
  }
  if (const auto* sl = std::get_if<SmallLossLosses>(&spec.loss_source)) {
    const LpSolution base = solve_offline_opt(sl->base_means, spec.cost_means, spec.alphas);
    Vector mu = sl->base_means;
    for (std::size_t a = 0; a < mu.size(); ++a) {
      if (base.optimal() && base.point[a] > 1e-9) mu[a] *= sl->level;
    }
    return mu;
  }
  return std::nullopt;
}

inline ProblemParams problem_params(const InstanceSpec& s) {
  return ProblemParams{s.K, s.m, s.T, s.delta, s.alphas};
}

}  // namespace detail

/// Rejects configurations that cannot run before any round is played.
inline void validate_config(const RunConfig& cfg) {
  try {
    cfg.instance.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  detail::problem_params(cfg.instance).validate();
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
  if (cfg.eta.mode == EtaSpec::Mode::fixed && !(cfg.eta.value > 0.0 && std::isfinite(cfg.eta.value))) {
    throw ConfigError("explicit learning rate must be positive");
  }
  if (is_doubling(cfg.algorithm) && (cfg.eta.mode == EtaSpec::Mode::fixed ||
                                     cfg.eta.mode == EtaSpec::Mode::oracle_loss)) {
    throw ConfigError("doubling algorithms choose their own learning rate");
  }
  if (is_hard(cfg.algorithm)) {
    const FeasibleAnchor anchor = solve_max_margin(cfg.instance.cost_means, cfg.instance.alphas);
    const double need = 12.0 * static_cast<double>(cfg.instance.K) / static_cast<double>(cfg.instance.T);
    if (cfg.eta.mode != EtaSpec::Mode::fixed && cfg.eta.mode != EtaSpec::Mode::oracle_loss &&
        anchor.rho < need) {
      throw ConfigError("solb with the theoretical learning rate needs rho >= 12K/T (rho = " +
                        std::to_string(anchor.rho) + ", 12K/T = " + std::to_string(need) + ")");
    }
  }
}

inline std::unique_ptr<Learner> make_learner(const RunConfig& cfg, double l_star,
                                             const std::optional<FeasibleAnchor>& anchor) {
  const InstanceSpec& s = cfg.instance;
  const ProblemParams p = detail::problem_params(s);
  const bool hard = is_hard(cfg.algorithm);
  const bool doubling = is_doubling(cfg.algorithm) || cfg.eta.mode == EtaSpec::Mode::doubling;
  const double rho = anchor ? anchor->rho : 0.0;
  const EtaMode mode = hard ? EtaMode::hard : EtaMode::soft;

  auto eta_for = [=](double l) {
    if (s.T < 2) return 1.0;  // one round: the rate is never used
    return theoretical_eta(mode, rho, s.T, s.delta, s.K, l);
  };
  auto build = [&](double eta) -> std::unique_ptr<Learner> {
    if (hard) return std::make_unique<SolbLearner>(p, eta, *anchor);
    return std::make_unique<ColbLearner>(p, eta);
  };
  if (doubling) return DoublingEtaLearner::create(build, eta_for);
  if (cfg.eta.mode == EtaSpec::Mode::fixed) return build(cfg.eta.value);
  if (cfg.eta.mode == EtaSpec::Mode::oracle_loss) return build(smallloss_eta(s.K, s.delta, l_star));
  return build(eta_for(l_star));
}

// ---------------------------------------------------------------------------
// Single run.

namespace detail {

template <class E>
[[noreturn]] void rethrow_at_round(const E& e, std::size_t t) {
  throw E("round " + std::to_string(t) + ": " + e.what());
}

}  // namespace detail

/// Plays T rounds for one seed. The environment and the learner draw from
/// separate sub-streams of the seed.
inline RunMetrics run_seed(const RunConfig& cfg, std::uint64_t seed,
                           const std::optional<FeasibleAnchor>& anchor) {
  const InstanceSpec& spec = cfg.instance;
  Rng env_rng = make_stream(seed, 0);
  Rng learner_rng = make_stream(seed, 1);
  LossCostSequence seq = materialize(spec, env_rng);
  const std::size_t T = spec.T;

  // The oracle rate knows L* of the (pre-drawn) sequence.
  const double l_star_oracle = hindsight_benchmark(seq.losses, spec.cost_means, spec.alphas).l_star;
  std::unique_ptr<Learner> learner = make_learner(cfg, l_star_oracle, anchor);

  RunMetrics m;
  m.seed = seed;
  m.T = T;
  std::vector<RoundRecord> records;
  records.reserve(T);
  std::vector<std::size_t> actions;
  Vector omd_losses;  // l_t^T x~_t (SOLB decomposition)
  Vector gammas_prev;

  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t round = t + 1;
    try {
      if (cfg.adversary) cfg.adversary(t, actions, seq.losses[t]);
      RoundRecord rec;
      rec.t = round;
      rec.strategy_played = learner->strategy();
      rec.strategy_omd = learner->omd_iterate();
      rec.gamma = learner->gamma();
      rec.action = sample_action(rec.strategy_played, learner_rng);
      rec.loss_observed = seq.losses[t][rec.action];
      for (std::size_t i = 0; i < spec.m; ++i) rec.costs_observed.push_back(seq.cost(t, i, rec.action));
      rec.expected_costs_played = expected_costs(spec.cost_means, rec.strategy_played);

      const Feedback fb{rec.action, rec.loss_observed, rec.costs_observed};
      if (round < T) {
        learner->update(fb, learner_rng);
        const StepInfo& info = learner->last_step();
        rec.safe_space_empty = info.space_empty;
        rec.kkt_residual = info.kkt_residual;
      } else {
        learner->observe_last(fb);  // no next strategy is needed
      }
      rec.eta_max = learner->schedule().max_eta();

      if (!m.safety_breach_round) {
        for (std::size_t i = 0; i < spec.m; ++i) {
          if (rec.expected_costs_played[i] > spec.alphas[i] + 1e-9) {
            m.safety_breach_round = round;
            break;
          }
        }
      }
      if (m.clean_event_ok && !clean_event_holds(learner->estimator(), spec.cost_means)) {
        m.clean_event_ok = false;
      }
      m.kkt_max = std::max(m.kkt_max, rec.kkt_residual);
      m.eta_ratio_max = std::max(m.eta_ratio_max, learner->schedule().max_ratio());
      if (rec.safe_space_empty) ++m.empty_rounds;
      actions.push_back(rec.action);
      records.push_back(std::move(rec));
    } catch (const ConfigError& e) {
      detail::rethrow_at_round(e, round);
    } catch (const FeasibilityError& e) {
      detail::rethrow_at_round(e, round);
    } catch (const ConvergenceError& e) {
      detail::rethrow_at_round(e, round);
    } catch (const ValidationError& e) {
      detail::rethrow_at_round(e, round);
    }
  }

  const RegretCurve rc = compute_regret(records, seq.losses, spec.cost_means, spec.alphas);
  m.regret_cum = rc.expected;
  m.regret_sampled_cum = rc.sampled;
  m.opt = rc.opt;
  m.x_star = rc.x_star;
  m.l_star = rc.l_star;
  m.violation_cum = compute_violations(records, spec.cost_means, spec.alphas);
  for (const auto& r : records) {
    m.gamma.push_back(r.gamma);
    m.eta_max.push_back(r.eta_max);
    m.safe_empty.push_back(r.safe_space_empty ? 1 : 0);
  }
  m.eta_final = learner->schedule().eta;
  m.eta_base = learner->schedule().eta_base;
  m.restarts = learner->restarts();

  if (const auto mu = detail::intended_loss_means(spec); mu && !records.empty()) {
    const LpSolution ref = solve_offline_opt(*mu, spec.cost_means, spec.alphas);
    if (ref.optimal()) {
      double r = 0.0;
      for (std::size_t t = 0; t < records.size(); ++t) {
        r += records[t].strategy_played.dot(seq.losses[t]) - ref.point.dot(seq.losses[t]);
      }
      m.regret_intended = r;
    }
  }

  if (anchor && !records.empty()) {
    for (std::size_t t = 0; t < records.size(); ++t) {
      const Vector& l = seq.losses[t];
      const double star = m.x_star.dot(l);
      const double g = records[t].gamma;
      m.decomposition_anchor += g * (anchor->x_diamond.dot(l) - star);
      m.decomposition_omd += (1.0 - g) * (records[t].strategy_omd.dot(l) - star);
    }
  }
  if (cfg.keep_records) m.records = std::move(records);
  return m;
}

/// All seeds of a config, in seed order. Worker threads pick seeds from a
/// shared counter; results land in their seed's slot.
inline std::vector<RunMetrics> run(const RunConfig& cfg) {
  validate_config(cfg);
  std::optional<FeasibleAnchor> anchor;
  if (is_hard(cfg.algorithm)) anchor = solve_max_margin(cfg.instance.cost_means, cfg.instance.alphas);

  std::vector<RunMetrics> out(cfg.seeds.size());
  std::vector<std::exception_ptr> errors(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < cfg.seeds.size(); j = next++) {
      try {
        out[j] = run_seed(cfg, cfg.seeds[j], anchor);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics and sweeps.

inline double median(Vector v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
  return 0.5 * (lo + hi);
}

/// Least-squares slope of ln y against ln x. Needs two distinct positive x
/// values; non-positive points are skipped.
inline std::optional<double> loglog_slope(const Vector& x, const Vector& y) {
  Vector lx;
  Vector ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0 && y[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx <= 0.0) return std::nullopt;
  return sxy / sxx;
}

struct SweepConfig {
  RunConfig base;
  std::vector<std::size_t> horizons;  // empty: the base instance's T only
  Vector levels;                      // small-loss levels; empty: no level axis
  std::size_t seed_count = 1;
  std::uint64_t first_seed = 1;
};

struct SweepRow {
  std::size_t T = 0;
  double level = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  double regret = 0.0;
  double violation = 0.0;
  double l_star = 0.0;
  double eta_ratio_max = 0.0;
  double kkt_max = 0.0;
  bool breach = false;
  bool clean_event_ok = true;
};

struct SweepGroup {
  std::size_t T = 0;
  double level = std::numeric_limits<double>::quiet_NaN();
  double median_regret = 0.0;
  double median_violation = 0.0;
  double median_l_star = 0.0;
  double breach_fraction = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepGroup> groups;
  std::optional<double> violation_slope_vs_T;   // over groups with distinct T
  std::optional<double> regret_slope_vs_lstar;  // over level groups
};

/// Runs every (T, level) cell over seed_count seeds and aggregates medians
/// and log-log slopes. A slope is reported only when there are at least two
/// cells along its axis.
inline SweepResult sweep(const SweepConfig& sc) {
  if (sc.seed_count == 0) throw ConfigError("sweep needs at least one seed");
  std::vector<std::size_t> horizons = sc.horizons;
  if (horizons.empty()) horizons.push_back(sc.base.instance.T);
  Vector levels = sc.levels;
  const bool with_levels = !levels.empty();
  if (with_levels && !std::holds_alternative<SmallLossLosses>(sc.base.instance.loss_source)) {
    throw ConfigError("a level sweep needs a small-loss instance");
  }
  if (!with_levels) levels.push_back(std::numeric_limits<double>::quiet_NaN());

  SweepResult res;
  for (std::size_t T : horizons) {
    for (double level : levels) {
      RunConfig cfg = sc.base;
      cfg.instance.T = T;
      if (auto* lb = std::get_if<LowerBoundLosses>(&cfg.instance.loss_source)) lb->params.T = T;
      if (with_levels) std::get<SmallLossLosses>(cfg.instance.loss_source).level = level;
      cfg.seeds.clear();
      for (std::size_t j = 0; j < sc.seed_count; ++j) cfg.seeds.push_back(sc.first_seed + j);
      const std::vector<RunMetrics> runs = run(cfg);

      SweepGroup g;
      g.T = T;
      g.level = level;
      Vector reg;
      Vector vio;
      Vector ls;
      std::size_t breaches = 0;
      for (const auto& r : runs) {
        SweepRow row;
        row.T = T;
        row.level = level;
        row.seed = r.seed;
        row.regret = r.regret_final();
        row.violation = r.violation_final();
        row.l_star = r.l_star;
        row.eta_ratio_max = r.eta_ratio_max;
        row.kkt_max = r.kkt_max;
        row.breach = r.safety_breach_round.has_value();
        row.clean_event_ok = r.clean_event_ok;
        reg.push_back(row.regret);
        vio.push_back(row.violation);
        ls.push_back(row.l_star);
        if (row.breach) ++breaches;
        res.rows.push_back(row);
      }
      g.median_regret = median(reg);
      g.median_violation = median(vio);
      g.median_l_star = median(ls);
      g.breach_fraction = static_cast<double>(breaches) / static_cast<double>(runs.size());
      res.groups.push_back(g);
    }
  }

  if (horizons.size() >= 2) {
    Vector ts;
    Vector vs;
    for (std::size_t T : horizons) {
      Vector v;
      for (const auto& g : res.groups) {
        if (g.T == T) v.push_back(g.median_violation);
      }
      ts.push_back(static_cast<double>(T));
      vs.push_back(median(v));
    }
    res.violation_slope_vs_T = loglog_slope(ts, vs);
  }
  if (with_levels && levels.size() >= 2) {
    Vector ls;
    Vector rs;
    for (const auto& g : res.groups) {
      ls.push_back(g.median_l_star);
      rs.push_back(g.median_regret);
    }
    res.regret_slope_vs_lstar = loglog_slope(ls, rs);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output files.

struct RoundsTable {
  std::vector<std::size_t> t;
  Vector regret_cum;
  Vector violation_cum;
  Vector gamma;
  Vector eta_max;
  std::vector<char> safe_empty;
};

inline void write_rounds_csv(std::ostream& os, const RunMetrics& m) {
  os << "t,regret_cum,violation_cum,gamma,eta_max,safe_empty\n";
  for (std::size_t t = 0; t < m.regret_cum.size(); ++t) {
    os << (t + 1) << ',' << format_double(m.regret_cum[t]) << ',' << format_double(m.violation_cum[t])
       << ',' << format_double(m.gamma[t]) << ',' << format_double(m.eta_max[t]) << ','
       << (m.safe_empty[t] ? 1 : 0) << '\n';
  }
}

inline RoundsTable read_rounds_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "t,regret_cum,violation_cum,gamma,eta_max,safe_empty") {
    throw ConfigError("unexpected rounds.csv header");
  }
  RoundsTable tab;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 6) throw ConfigError("rounds.csv row must have 6 cells");
    tab.t.push_back(static_cast<std::size_t>(detail::parse_double(cells[0])));
    tab.regret_cum.push_back(detail::parse_double(cells[1]));
    tab.violation_cum.push_back(detail::parse_double(cells[2]));
    tab.gamma.push_back(detail::parse_double(cells[3]));
    tab.eta_max.push_back(detail::parse_double(cells[4]));
    tab.safe_empty.push_back(cells[5] == "1" ? 1 : 0);
  }
  return tab;
}

namespace detail {

inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json seed_summary(const RunMetrics& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["T"] = m.T;
  j["regret"] = m.regret_final();
  j["regret_sampled"] = m.regret_sampled_final();
  j["regret_intended"] = number_or_null(m.regret_intended);
  j["violation"] = m.violation_final();
  j["opt"] = m.opt;
  j["l_star"] = m.l_star;
  j["x_star"] = m.x_star.vec();
  j["safety_breach_round"] =
      m.safety_breach_round ? nlohmann::json(*m.safety_breach_round) : nlohmann::json(nullptr);
  j["clean_event_ok"] = m.clean_event_ok;
  j["eta_base"] = m.eta_base;
  j["eta_final"] = m.eta_final;
  j["eta_ratio_max"] = m.eta_ratio_max;
  j["kkt_max"] = m.kkt_max;
  j["restarts"] = m.restarts;
  j["empty_rounds"] = m.empty_rounds;
  j["decomposition_anchor"] = m.decomposition_anchor;
  j["decomposition_omd"] = m.decomposition_omd;
  return j;
}

}  // namespace detail

inline nlohmann::json summarize(const std::vector<RunMetrics>& runs) {
  nlohmann::json j;
  j["seeds"] = nlohmann::json::array();
  Vector reg;
  Vector vio;
  std::size_t breaches = 0;
  std::size_t clean = 0;
  for (const auto& m : runs) {
    j["seeds"].push_back(detail::seed_summary(m));
    reg.push_back(m.regret_final());
    vio.push_back(m.violation_final());
    if (m.safety_breach_round) ++breaches;
    if (m.clean_event_ok) ++clean;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, runs.size()));
  j["aggregate"] = {
      {"runs", runs.size()},
      {"median_regret", detail::number_or_null(median(reg))},
      {"median_violation", detail::number_or_null(median(vio))},
      {"breach_fraction", static_cast<double>(breaches) / n},
      {"clean_event_fraction", static_cast<double>(clean) / n},
  };
  return j;
}

namespace detail {

// Minimal SVG line chart; each series is drawn against its index.
inline std::string svg_panel(const std::vector<std::pair<std::string, Vector>>& series,
                             const std::string& title, double x0, double y0, double w, double h,
                             bool loglog = false, const Vector& xs = {}) {
  std::ostringstream os;
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymin = xmin;
  double ymax = -xmin;
  auto tx = [&](double v) { return loglog ? std::log(v) : v; };
  for (const auto& [name, ys] : series) {
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double x = xs.empty() ? static_cast<double>(i + 1) : xs[i];
      if (loglog && (x <= 0.0 || ys[i] <= 0.0)) continue;
      xmin = std::min(xmin, tx(x));
      xmax = std::max(xmax, tx(x));
      ymin = std::min(ymin, tx(ys[i]));
      ymax = std::max(ymax, tx(ys[i]));
    }
  }
  os << "<text x='" << x0 + 4 << "' y='" << y0 + 14 << "' font-size='12'>" << title << "</text>\n";
  os << "<rect x='" << x0 << "' y='" << y0 << "' width='" << w << "' height='" << h
     << "' fill='none' stroke='#888'/>\n";
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::size_t c = 0;
  for (const auto& [name, ys] : series) {
    os << "<polyline fill='none' stroke='" << colors[c % 4] << "' points='";
    const std::size_t stride = std::max<std::size_t>(1, ys.size() / 800);
    for (std::size_t i = 0; i < ys.size(); i += stride) {
      const double x = xs.empty() ? static_cast<double>(i + 1) : xs[i];
      if (loglog && (x <= 0.0 || ys[i] <= 0.0)) continue;
      const double px = x0 + 10 + (w - 20) * (tx(x) - xmin) / (xmax - xmin);
      const double py = y0 + h - 10 - (h - 30) * (tx(ys[i]) - ymin) / (ymax - ymin);
      os << px << ',' << py << ' ';
    }
    os << "'/>\n<text x='" << x0 + w - 120 << "' y='" << y0 + 14 + 14 * static_cast<double>(c)
       << "' font-size='11' fill='" << colors[c % 4] << "'>" << name << "</text>\n";
    ++c;
  }
  return os.str();
}

}  // namespace detail

/// Regret and violation curves of one run. Given a sweep result, a log-log
/// panel of median violation against T is added below them.
inline std::string render_plot(const RunMetrics& m, const SweepResult* sweep_result = nullptr) {
  std::ostringstream os;
  const double height = sweep_result ? 660 : 440;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='640' height='" << height << "'>\n";
  os << detail::svg_panel({{"regret", m.regret_cum}}, "cumulative regret", 10, 10, 620, 200);
  os << detail::svg_panel({{"violation", m.violation_cum}}, "cumulative violation", 10, 220, 620, 200);
  if (sweep_result) {
    Vector xs;
    Vector ys;
    for (const auto& g : sweep_result->groups) {
      xs.push_back(static_cast<double>(g.T));
      ys.push_back(g.median_violation);
    }
    os << detail::svg_panel({{"median V_T vs T", ys}}, "log-log scaling", 10, 440, 620, 200, true, xs);
  }
  os << "</svg>\n";
  return os.str();
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

}  // namespace detail

/// rounds.csv (first seed), rounds_seed_<seed>.csv (other seeds),
/// summary.json and, if requested, plot.svg.
inline void emit_outputs(const std::vector<RunMetrics>& runs, const std::string& dir, bool plot) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
  for (std::size_t j = 0; j < runs.size(); ++j) {
    const std::string name = j == 0 ? "rounds.csv" : "rounds_seed_" + std::to_string(runs[j].seed) + ".csv";
    auto os = detail::open_output(fs::path(dir) / name);
    write_rounds_csv(os, runs[j]);
  }
  if (runs.empty()) {
    auto os = detail::open_output(fs::path(dir) / "rounds.csv");
    write_rounds_csv(os, RunMetrics{});
  }
  {
    auto os = detail::open_output(fs::path(dir) / "summary.json");
    os << summarize(runs).dump(2) << '\n';
  }
  if (plot && !runs.empty()) {
    auto os = detail::open_output(fs::path(dir) / "plot.svg");
    os << render_plot(runs.front());
  }
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << "T,level,seed,regret,violation,l_star,eta_ratio_max,kkt_max,breach,clean_event_ok\n";
  for (const auto& row : r.rows) {
    os << row.T << ',' << (std::isnan(row.level) ? std::string() : format_double(row.level)) << ','
       << row.seed << ',' << format_double(row.regret) << ',' << format_double(row.violation) << ','
       << format_double(row.l_star) << ',' << format_double(row.eta_ratio_max) << ','
       << format_double(row.kkt_max) << ',' << (row.breach ? 1 : 0) << ','
       << (row.clean_event_ok ? 1 : 0) << '\n';
  }
}

inline nlohmann::json sweep_summary(const SweepResult& r) {
  nlohmann::json j;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : r.groups) {
    j["groups"].push_back({{"T", g.T},
                           {"level", detail::number_or_null(g.level)},
                           {"median_regret", g.median_regret},
                           {"median_violation", g.median_violation},
                           {"median_l_star", g.median_l_star},
                           {"breach_fraction", g.breach_fraction}});
  }
  if (r.violation_slope_vs_T) j["violation_slope_vs_T"] = *r.violation_slope_vs_T;
  if (r.regret_slope_vs_lstar) j["regret_slope_vs_lstar"] = *r.regret_slope_vs_lstar;
  return j;
}

inline void emit_sweep_outputs(const SweepResult& r, const std::string& dir, bool plot = false,
                               const RunMetrics* first_run = nullptr) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
  {
    auto os = detail::open_output(fs::path(dir) / "sweep.csv");
    write_sweep_csv(os, r);
  }
  {
    auto os = detail::open_output(fs::path(dir) / "sweep_summary.json");
    os << sweep_summary(r).dump(2) << '\n';
  }
  if (plot && first_run) {
    auto os = detail::open_output(fs::path(dir) / "plot.svg");
    os << render_plot(*first_run, &r);
  }
}

}  // namespace cmab
