// hbl: run, sweep, validate and re-summarize Hessian bifurcation experiments.

#include "hbl/harness.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<hbl::Index> steps;
  std::optional<double> eta;
  std::string out;
  bool no_hessian = false;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "RNG seed for the frames (and samples)");
  cmd->add_option("--steps", o.steps, "Number of gradient-descent steps")->check(CLI::NonNegativeNumber);
  cmd->add_option("--eta", o.eta, "Absolute step size");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_flag("--no-hessian", o.no_hessian, "Skip Hessian assembly; emit predicted spectra");
}

hbl::ExperimentConfig load(const std::string& path, const Overrides& o) {
  hbl::ExperimentConfig cfg = hbl::load_config(path);
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.steps) {
    cfg.train.steps = *o.steps;
    cfg.train.checkpoints.clear();
  }
  if (o.eta) cfg.train.eta = *o.eta;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.no_hessian) {
    cfg.analyses.assemble_hessian = false;
    cfg.analyses.fd_oracle = false;
    cfg.analyses.eigenvectors = false;
    cfg.analyses.validation = false;
  }
  return cfg;
}

int print_checks(const hbl::RunArtifacts& run, const std::filesystem::path& dir) {
  const hbl::CheckpointRecord& last = run.final_checkpoint();
  fmt::print("{}: L={} r={} P={} eta={:.6g} steps={}\n", run.resolved.config.name, run.resolved.dims.depth(),
             run.resolved.dims.rank(), run.resolved.parameter_count, run.resolved.eta,
             run.resolved.config.train.steps);
  fmt::print("final excess loss {:.3e}, ratio {:.8f}, counts {}/{}/{} ({})\n", last.excess_loss,
             last.spectrum.ratio, last.spectrum.dominant_count, last.spectrum.bulk_count,
             last.spectrum.zero_count, last.measured ? "measured" : "predicted");
  for (const hbl::CheckVerdict& c : run.checks) {
    fmt::print("  {:<26} {}  {}\n", c.name, c.passed ? "PASS" : "FAIL", c.detail);
  }
  fmt::print("artifacts in {}\n", dir.string());
  return run.passed() ? hbl::kExitOk : hbl::kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hessian spectral bifurcation experiments for deep linear networks"};
  app.require_subcommand(1);

  std::string config_path;
  std::string report_dir;
  Overrides overrides;
  std::vector<hbl::Index> depths;
  std::vector<hbl::Index> ranks;
  hbl::Index workers = 1;

  CLI::App* run = app.add_subcommand("run", "Train one configuration and write its artifacts");
  run->add_option("config", config_path, "Config file (JSON)")->required();
  add_overrides(run, overrides);

  CLI::App* sweep = app.add_subcommand("sweep", "Run a grid of depths and ranks from a base config");
  sweep->add_option("config", config_path, "Base config file (JSON)")->required();
  sweep->add_option("--L", depths, "Depths");
  sweep->add_option("--r", ranks, "Effective ranks");
  sweep->add_option("--workers", workers, "Parallel runs")->check(CLI::PositiveNumber);
  add_overrides(sweep, overrides);

  CLI::App* check = app.add_subcommand("check", "Validate a config without running it");
  check->add_option("config", config_path, "Config file (JSON)")->required();
  add_overrides(check, overrides);

  CLI::App* report = app.add_subcommand("report", "Re-summarize artifacts already on disk");
  report->add_option("dir", report_dir, "Run or sweep output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? hbl::kExitOk : hbl::kExitConfigError;
  }

  try {
    if (*run) {
      const hbl::ExperimentConfig cfg = load(config_path, overrides);
      const hbl::RunArtifacts artifacts = hbl::run_experiment(cfg);
      return print_checks(artifacts, hbl::resolve_output_dir(cfg));
    }
    if (*sweep) {
      const hbl::ExperimentConfig cfg = load(config_path, overrides);
      const hbl::SweepSummary summary = hbl::run_sweep(cfg, depths, ranks, workers);
      for (const hbl::SweepPoint& p : summary.points) {
        fmt::print("L={} r={} {:<5} ratio {:.8f} counts {}/{} (expected {}/{}){}\n", p.depth, p.rank, p.status,
                   p.ratio, p.dominant_count, p.bulk_count, p.expected_dominant, p.expected_bulk,
                   p.error.empty() ? "" : "  " + p.error);
      }
      for (const hbl::RankFit& f : summary.fits) {
        if (f.fit) {
          fmt::print("r={} ratio-vs-L slope {:.6f} intercept {:.6f} max rel dev {:.3e} envelope {}\n", f.rank,
                     f.fit->slope, f.fit->intercept, f.fit->max_rel_dev,
                     f.fit->within_envelope ? "ok" : "violated");
        } else {
          fmt::print("r={} no fit: {}\n", f.rank, f.error);
        }
      }
      fmt::print("summary in {}\n", hbl::resolve_output_dir(cfg).string());
      return summary.passed() ? hbl::kExitOk : hbl::kExitCheckFailure;
    }
    if (*check) {
      const hbl::ResolvedConfig rc = hbl::resolve_config(load(config_path, overrides));
      fmt::print("{}: valid\n", rc.config.name);
      fmt::print("  widths {} rank {} d* {} input support {}\n", fmt::join(rc.dims.widths(), "/"),
                 rc.dims.rank(), rc.dims.d_star(), rc.support);
      fmt::print("  P = {} ({})\n", rc.parameter_count,
                 rc.measure_hessian ? "Hessian measured" : "spectra predicted");
      fmt::print("  eta = {:.6g} (bound {:.6g}, M = {:.6g}), steps {}, {} checkpoints\n", rc.eta, rc.max_eta,
                 rc.m, rc.config.train.steps, rc.checkpoints.size());
      return hbl::kExitOk;
    }
    return hbl::report_directory(report_dir, std::cout);
  } catch (const hbl::Error& e) {
    std::cerr << fmt::format("hbl: {} error: {}\n", hbl::to_string(e.kind()), e.what());
    return hbl::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << fmt::format("hbl: {}\n", e.what());
    return hbl::kExitNumericalFailure;
  }
}
