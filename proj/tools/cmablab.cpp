// Command-line front end: run, sweep, lbgen, verify.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cmab/cmab.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& output, bool plot, unsigned threads) {
  cmab::ParsedConfig parsed = cmab::load_config(config_path);
  cmab::RunConfig& cfg = parsed.run;
  if (!output.empty()) cfg.output = output;
  if (plot) cfg.plot = true;
  if (threads > 0) cfg.threads = threads;
  const auto runs = cmab::run(cfg);
  const auto summary = cmab::summarize(runs);
  if (!cfg.output.empty()) cmab::emit_outputs(runs, cfg.output, cfg.plot);
  std::cout << summary["aggregate"].dump(2) << '\n';
  return cmab::kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& output, bool plot, unsigned threads) {
  cmab::ParsedConfig parsed = cmab::load_config(config_path);
  if (!parsed.has_sweep) throw cmab::ConfigError("config has no 'sweep' section");
  cmab::SweepConfig& sc = parsed.sweep;
  if (!output.empty()) sc.base.output = output;
  if (threads > 0) sc.base.threads = threads;
  const cmab::SweepResult res = cmab::sweep(sc);
  if (!sc.base.output.empty()) {
    const bool want_plot = plot || sc.base.plot;
    cmab::RunMetrics first;
    if (want_plot) {
      cmab::RunConfig one = sc.base;
      one.seeds = {sc.first_seed};
      first = cmab::run(one).front();
    }
    cmab::emit_sweep_outputs(res, sc.base.output, want_plot, want_plot ? &first : nullptr);
  }
  std::cout << cmab::sweep_summary(res).dump(2) << '\n';
  return cmab::kExitOk;
}

int cmd_lbgen(int variant, std::size_t horizon, double omega, double delta_gap, double rho,
              std::uint64_t seed, const std::string& output) {
  cmab::LowerBoundParams p;
  p.T = horizon;
  p.omega = omega;
  p.delta_gap = delta_gap;
  p.rho_lb = rho;
  try {
    cmab::lb_validate(variant, p);
  } catch (const cmab::ValidationError& e) {
    throw cmab::ConfigError(e.what());
  }
  cmab::Rng rng = cmab::make_stream(seed, 0);
  const cmab::LossCostSequence seq = cmab::lb_instance(variant, p, rng);
  if (output.empty() || output == "-") {
    cmab::write_sequence_csv(std::cout, seq);
  } else {
    cmab::write_sequence_csv(output, seq);
  }
  return cmab::kExitOk;
}

int cmd_verify() {
  bool all = true;
  for (const auto& r : cmab::run_verification()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all = all && r.passed;
  }
  return all ? cmab::kExitOk : cmab::kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constrained adversarial bandit lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output;
  bool plot = false;
  unsigned threads = 0;

  auto* run = app.add_subcommand("run", "run one configuration over its seeds");
  run->add_option("config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output", output, "output directory (overrides the config)");
  run->add_flag("--plot", plot, "also write plot.svg");
  run->add_option("-j,--threads", threads, "worker threads");

  auto* sw = app.add_subcommand("sweep", "scaling study over horizons and small-loss levels");
  sw->add_option("config", config_path, "JSON config with a 'sweep' section")->required()->check(CLI::ExistingFile);
  sw->add_option("-o,--output", output, "output directory (overrides the config)");
  sw->add_flag("--plot", plot, "also write plot.svg");
  sw->add_option("-j,--threads", threads, "worker threads");

  int variant = 1;
  std::size_t horizon = 1000;
  double omega = 0.1;
  double delta_gap = 0.0;
  double rho = 0.2;
  std::uint64_t seed = 1;
  auto* lb = app.add_subcommand("lbgen", "write a lower-bound instance sequence as CSV");
  lb->add_option("--variant", variant, "instance 1..4")->required();
  lb->add_option("-T,--horizon", horizon, "number of rounds")->required();
  lb->add_option("--omega", omega, "mean of the base loss stream");
  lb->add_option("--delta-gap", delta_gap, "loss offset of the third action");
  lb->add_option("--rho", rho, "safety margin of the third action");
  lb->add_option("--seed", seed, "random seed");
  lb->add_option("-o,--output", output, "CSV path ('-' for stdout)");

  app.add_subcommand("verify", "run the solver and estimator self-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cmab::kExitOk : cmab::kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, output, plot, threads);
    if (*sw) return cmd_sweep(config_path, output, plot, threads);
    if (*lb) return cmd_lbgen(variant, horizon, omega, delta_gap, rho, seed, output);
    return cmd_verify();
  } catch (const cmab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cmab::kExitConfig;
  } catch (const cmab::FeasibilityError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return cmab::kExitFeasibility;
  } catch (const cmab::ConvergenceError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return cmab::kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cmab::kExitFailure;
  }
}
