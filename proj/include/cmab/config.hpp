#pragma once

// JSON run configurations. Every object is checked against the keys it may
// carry; anything else is a ConfigError.
//
// {
//   "instance": {
//     "T": 2000, "delta": 0.05, "K": 3, "m": 1,
//     "alphas": [0.5], "cost_means": [[0.8, 0.6, 0.3]], "cost_family": ["bernoulli"],
//     "losses": {"type": "bernoulli", "means": [0.3, 0.6, 0.8]}
//   },
//   "algorithm": "solb", "eta": "oracle", "seeds": {"first": 1, "count": 20},
//   "output": "out", "threads": 1, "plot": true,
//   "sweep": {"horizons": [1000, 4000], "levels": [0.1, 1.0], "seeds": 20}
// }

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmab/core.hpp"
#include "cmab/environments.hpp"
#include "cmab/error.hpp"
#include "cmab/harness.hpp"

namespace cmab {

using nlohmann::json;

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown field '" + key + "' in " + where);
  }
}

template <class T>
T get_as(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing field '" + std::string(key) + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("field '" + std::string(key) + "' in " + where + ": " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? get_as<T>(j, key, where) : fallback;
}

inline CostFamily parse_family(const std::string& s) {
  if (s == "bernoulli") return CostFamily::bernoulli;
  if (s == "beta") return CostFamily::beta;
  throw ConfigError("unsupported cost family '" + s + "'");
}

inline InstanceSpec parse_lower_bound_instance(const json& inst, const json& losses) {
  check_keys(losses, {"type", "variant", "omega", "psi", "eps", "rho", "delta_gap"}, "instance.losses");
  for (const char* k : {"K", "m", "alphas", "cost_means", "cost_family"}) {
    if (inst.contains(k)) {
      throw ConfigError(std::string("'") + k + "' is fixed by the lower-bound table; remove it");
    }
  }
  LowerBoundParams p;
  p.T = get_as<std::size_t>(inst, "T", "instance");
  p.omega = get_or<double>(losses, "omega", p.omega, "instance.losses");
  p.gap_psi = get_or<double>(losses, "psi", p.gap_psi, "instance.losses");
  p.eps = get_or<double>(losses, "eps", p.eps, "instance.losses");
  p.rho_lb = get_or<double>(losses, "rho", p.rho_lb, "instance.losses");
  p.delta_gap = get_or<double>(losses, "delta_gap", p.delta_gap, "instance.losses");
  const int variant = get_as<int>(losses, "variant", "instance.losses");
  try {
    return lower_bound_spec(variant, p, get_or<double>(inst, "delta", 0.05, "instance"));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace detail

inline InstanceSpec parse_instance(const json& inst) {
  using detail::get_as;
  using detail::get_or;
  detail::check_keys(inst, {"K", "m", "T", "delta", "alphas", "cost_means", "cost_family", "losses"},
                     "instance");
  const json losses = get_as<json>(inst, "losses", "instance");
  const std::string type = get_as<std::string>(losses, "type", "instance.losses");
  if (type == "lower_bound") return detail::parse_lower_bound_instance(inst, losses);

  InstanceSpec s;
  s.delta = get_or<double>(inst, "delta", 0.05, "instance");
  s.alphas = get_as<Vector>(inst, "alphas", "instance");
  s.cost_means = get_as<Matrix>(inst, "cost_means", "instance");
  s.m = get_or<std::size_t>(inst, "m", s.cost_means.size(), "instance");
  s.K = get_or<std::size_t>(inst, "K", s.cost_means.empty() ? 0 : s.cost_means.front().size(), "instance");
  for (const auto& f : get_or<std::vector<std::string>>(inst, "cost_family", {}, "instance")) {
    s.cost_family.push_back(detail::parse_family(f));
  }

  if (type == "bernoulli") {
    detail::check_keys(losses, {"type", "means"}, "instance.losses");
    s.loss_source = BernoulliLosses{get_as<Vector>(losses, "means", "instance.losses")};
    s.T = get_as<std::size_t>(inst, "T", "instance");
  } else if (type == "phased") {
    detail::check_keys(losses, {"type", "phases"}, "instance.losses");
    s.loss_source = PhasedLosses{get_as<Matrix>(losses, "phases", "instance.losses")};
    s.T = get_as<std::size_t>(inst, "T", "instance");
  } else if (type == "smallloss") {
    detail::check_keys(losses, {"type", "base_means", "level"}, "instance.losses");
    s.loss_source = SmallLossLosses{get_as<Vector>(losses, "base_means", "instance.losses"),
                                    get_or<double>(losses, "level", 1.0, "instance.losses")};
    s.T = get_as<std::size_t>(inst, "T", "instance");
  } else if (type == "file") {
    detail::check_keys(losses, {"type", "path"}, "instance.losses");
    LossCostSequence seq = read_sequence_csv(get_as<std::string>(losses, "path", "instance.losses"));
    if (seq.K != s.K || seq.m != s.m) {
      throw ConfigError("sequence file dimensions do not match cost_means");
    }
    s.T = get_or<std::size_t>(inst, "T", seq.horizon(), "instance");
    s.loss_source = FixedSequence{std::move(seq)};
  } else {
    throw ConfigError("unknown loss type '" + type + "'");
  }
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return s;
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "colb") return Algorithm::colb;
  if (s == "solb") return Algorithm::solb;
  if (s == "colb-doubling") return Algorithm::colb_doubling;
  if (s == "solb-doubling") return Algorithm::solb_doubling;
  throw ConfigError("unknown algorithm '" + s + "'");
}

inline EtaSpec parse_eta(const json& j) {
  EtaSpec e;
  if (j.is_number()) {
    e.mode = EtaSpec::Mode::fixed;
    e.value = j.get<double>();
    if (!(e.value > 0.0)) throw ConfigError("eta must be positive");
    return e;
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "oracle") return e;
    if (s == "oracle-loss") {
      e.mode = EtaSpec::Mode::oracle_loss;
      return e;
    }
    if (s == "doubling") {
      e.mode = EtaSpec::Mode::doubling;
      return e;
    }
  }
  throw ConfigError("eta must be \"oracle\", \"oracle-loss\", \"doubling\" or a positive number");
}

inline std::vector<std::uint64_t> parse_seeds(const json& j) {
  std::vector<std::uint64_t> seeds;
  if (j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_number_unsigned()) throw ConfigError("seeds must be non-negative integers");
      seeds.push_back(v.get<std::uint64_t>());
    }
  } else {
    detail::check_keys(j, {"first", "count"}, "seeds");
    const auto first = detail::get_or<std::uint64_t>(j, "first", 1, "seeds");
    const auto count = detail::get_as<std::uint64_t>(j, "count", "seeds");
    for (std::uint64_t k = 0; k < count; ++k) seeds.push_back(first + k);
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  return seeds;
}

struct ParsedConfig {
  RunConfig run;
  bool has_sweep = false;
  SweepConfig sweep;
};

inline ParsedConfig parse_config(const json& j) {
  using detail::get_or;
  detail::check_keys(j, {"instance", "algorithm", "eta", "seeds", "output", "threads", "plot", "sweep"},
                     "config");
  ParsedConfig out;
  RunConfig& c = out.run;
  c.instance = parse_instance(detail::get_as<json>(j, "instance", "config"));
  c.algorithm = parse_algorithm(get_or<std::string>(j, "algorithm", "colb", "config"));
  if (j.contains("eta")) {
    c.eta = parse_eta(j.at("eta"));
  } else if (is_doubling(c.algorithm)) {
    c.eta.mode = EtaSpec::Mode::doubling;
  }
  if (j.contains("seeds")) c.seeds = parse_seeds(j.at("seeds"));
  c.output = get_or<std::string>(j, "output", "", "config");
  c.threads = get_or<unsigned>(j, "threads", 1u, "config");
  c.plot = get_or<bool>(j, "plot", false, "config");

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    detail::check_keys(s, {"horizons", "levels", "seeds", "first_seed"}, "sweep");
    out.has_sweep = true;
    out.sweep.base = c;
    out.sweep.horizons = get_or<std::vector<std::size_t>>(s, "horizons", {}, "sweep");
    out.sweep.levels = get_or<Vector>(s, "levels", {}, "sweep");
    out.sweep.seed_count = get_or<std::size_t>(s, "seeds", c.seeds.size(), "sweep");
    out.sweep.first_seed = get_or<std::uint64_t>(s, "first_seed", c.seeds.front(), "sweep");
  }
  validate_config(c);
  return out;
}

inline ParsedConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace cmab
