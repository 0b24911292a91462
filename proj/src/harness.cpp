#include "hbl/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

namespace hbl {

namespace {

constexpr double kUnitRoundoff = std::numeric_limits<double>::epsilon() / 2.0;
// Relative allowance on the norm bounds; both sides come from the same state.
constexpr double kBoundRelTol = 1e-12;
constexpr double kWeylRelTol = 1e-9;
constexpr double kFdTol = 1e-5;
constexpr double kEigenvectorTol = 1e-8;
constexpr double kGramTol = 1e-9;
constexpr double kScalarMatrixTol = 1e-10;

// Excess loss below which rounding in lambda^L decides the value.
double loss_floor(const NetworkDims& dims) {
  const double unit = 64.0 * kUnitRoundoff;
  return static_cast<double>(dims.output() * dims.input()) * unit * unit;
}

// Excess loss from the shared spectrum: the aligned coordinates move toward
// 1, tail coordinates inside the input support toward 0.
double model_excess_loss(const Vector& lambdas, Index rank, Index support, Index depth) {
  const double l = static_cast<double>(depth);
  double total = closed_form_excess_loss(lambdas.head(rank), depth);
  for (Index i = rank; i < std::min(support, lambdas.size()); ++i) {
    const double v = std::pow(lambdas[i], l);
    total += 0.5 * v * v;
  }
  return total;
}

double tail_step(double lambda, double eta, Index depth) {
  return lambda - eta * std::pow(lambda, static_cast<double>(2 * depth - 1));
}

class Tracker {
 public:
  explicit Tracker(std::string name) : name_(std::move(name)) {}

  void add(double measured, double bound, double allowance, Index step) {
    const double excess = measured - bound - allowance;
    if (!seen_ || excess > worst_) {
      worst_ = excess;
      tolerance_ = allowance;
      step_ = step;
      measured_ = measured;
      bound_ = bound;
    }
    seen_ = true;
  }

  void skip(std::string reason) { skipped_ = std::move(reason); }

  CheckVerdict verdict() const {
    CheckVerdict v;
    v.name = name_;
    if (!seen_) {
      v.detail = skipped_.empty() ? "no samples" : "skipped: " + skipped_;
      return v;
    }
    v.passed = worst_ <= 0.0 && std::isfinite(worst_);
    v.worst = worst_;
    v.tolerance = tolerance_;
    v.detail = fmt::format("worst at step {}: measured {:.6e} vs bound {:.6e}", step_, measured_, bound_);
    return v;
  }

 private:
  std::string name_;
  bool seen_ = false;
  double worst_ = 0.0;
  double tolerance_ = 0.0;
  double measured_ = 0.0;
  double bound_ = 0.0;
  Index step_ = 0;
  std::string skipped_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

std::vector<Index> checkpoint_schedule(Index steps, Index stride) {
  std::vector<Index> out;
  if (steps < 0) return out;
  if (stride > 0) {
    for (Index t = 0; t <= steps; t += stride) out.push_back(t);
  } else {
    out.push_back(0);
    for (Index t = 1; t <= steps; t *= 2) {
      out.push_back(t);
      if (t > steps / 2) break;
    }
  }
  if (out.back() != steps) out.push_back(steps);
  return out;
}

ResolvedConfig resolve_config(const ExperimentConfig& config) {
  require(!config.name.empty(), "name must not be empty");
  require(config.name.find_first_of("/\\") == std::string::npos,
          fmt::format("name '{}' must not contain path separators", config.name));
  require(!config.widths.empty(), "network.widths is missing");

  ResolvedConfig rc{config, NetworkDims(config.widths, config.rank)};
  const NetworkDims& dims = rc.dims;
  const Index depth = dims.depth();
  const Index r = dims.rank();
  const Index ds = dims.d_star();

  require(config.train.steps >= 0, fmt::format("train.steps = {} must be nonnegative", config.train.steps));
  require(config.train.checkpoint_stride >= 0, "train.checkpoint_stride must be nonnegative");
  require(config.data.samples >= 0, "data.samples must be nonnegative");
  rc.support = support_dimension(dims, config.data.support);

  rc.initial_lambdas = Vector::Zero(ds);
  if (config.init.mode == InitMode::kUsi) {
    require(std::isfinite(config.init.mu) && config.init.mu > 0.0,
            fmt::format("init.mu = {} must be positive", config.init.mu));
    rc.initial_lambdas.head(r).setConstant(config.init.mu);
  } else {
    const auto n = static_cast<Index>(config.init.lambdas.size());
    require(n == r || n == ds,
            fmt::format("init.lambdas has {} entries; expected r = {} or d* = {}", n, r, ds));
    for (Index i = 0; i < n; ++i) {
      const double v = config.init.lambdas[static_cast<std::size_t>(i)];
      require(std::isfinite(v) && v >= 0.0, fmt::format("init.lambdas[{}] = {} must be nonnegative", i, v));
      require(i >= r || v > 0.0, fmt::format("init.lambdas[{}] must be positive (i < r)", i));
      require(i == 0 || v <= config.init.lambdas[static_cast<std::size_t>(i - 1)],
              "init.lambdas must be descending");
      rc.initial_lambdas[i] = v;
    }
    const bool tail = (rc.initial_lambdas.tail(ds - r).array() != 0.0).any();
    require(!tail || config.init.allow_nonzero_tail,
            "init.lambdas has nonzero entries beyond r; set init.allow_nonzero_tail to explore that mode");
  }
  rc.singular_values = rc.initial_lambdas.array().pow(static_cast<double>(depth)).matrix();

  rc.m = bound_m(rc.initial_lambdas);
  rc.max_eta = max_step_size(depth, rc.m);
  if (config.train.eta) {
    rc.eta = *config.train.eta;
  } else {
    require(config.train.eta_fraction > 0.0 && config.train.eta_fraction < 1.0,
            fmt::format("train.eta_fraction = {} must lie in (0, 1)", config.train.eta_fraction));
    rc.eta = config.train.eta_fraction * rc.max_eta;
  }
  require(std::isfinite(rc.eta) && rc.eta > 0.0 && rc.eta < rc.max_eta,
          fmt::format("step size eta = {} violates 0 < eta < min{{1/L, 2/((2L-1) M^(2L-2))}} = {} "
                      "(L = {}, M = {})",
                      rc.eta, rc.max_eta, depth, rc.m));

  if (!config.train.checkpoints.empty()) {
    rc.checkpoints = config.train.checkpoints;
    for (std::size_t i = 0; i < rc.checkpoints.size(); ++i) {
      const Index t = rc.checkpoints[i];
      require(t >= 0 && t <= config.train.steps,
              fmt::format("checkpoint {} is outside [0, steps = {}]", t, config.train.steps));
      require(i == 0 || t > rc.checkpoints[i - 1], "train.checkpoints must be strictly increasing");
    }
  } else {
    rc.checkpoints = checkpoint_schedule(config.train.steps, config.train.checkpoint_stride);
  }

  rc.parameter_count = dims.parameter_count();
  rc.measure_hessian = config.analyses.assemble_hessian && rc.parameter_count <= kHessianCap;
  if (config.analyses.fd_oracle) {
    if (rc.parameter_count > kDefaultOracleCap) {
      throw OracleCapError(fmt::format("analyses.fd_oracle needs P <= {}; this network has P = {}",
                                       kDefaultOracleCap, rc.parameter_count));
    }
    require(config.analyses.assemble_hessian, "analyses.fd_oracle requires analyses.assemble_hessian");
  }
  require(!config.analyses.eigenvectors || rc.measure_hessian,
          "analyses.eigenvectors requires a measured Hessian (assemble_hessian and P <= 3000)");
  require(!config.analyses.validation || rc.measure_hessian,
          "analyses.validation requires a measured Hessian (assemble_hessian and P <= 3000)");
  return rc;
}

bool RunArtifacts::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckVerdict& c) { return c.passed; });
}

namespace {

CheckpointRecord analyze_checkpoint(const ResolvedConfig& rc, const WeightStack& w,
                                    const DataModel& data, const SpectralState& state, Index step) {
  const NetworkDims& dims = rc.dims;
  const Index depth = dims.depth();
  const Index r = dims.rank();
  const AnalysisFlags& flags = rc.config.analyses;

  CheckpointRecord rec;
  rec.step = step;
  rec.lambdas = state.lambdas.head(r);
  rec.lambda_max = state.lambdas.cwiseAbs().maxCoeff();
  rec.structure_residual = state.residual;
  rec.excess_loss = model_excess_loss(state.lambdas, r, rc.support, depth);
  rec.excess_loss_trace = excess_loss_trace(w, data);

  const Matrix omega = residual(w, data);
  rec.omega_norm = spectral_norm(omega);
  rec.omega_bound = omega_norm_bound(r, rec.excess_loss_trace);
  rec.hf_bound = hf_norm_bound(rec.lambda_max, rec.excess_loss_trace, r, depth);

  const SpectrumPrediction prediction = predict_spectrum(rec.lambdas, dims, rc.support);
  const Index p = rc.parameter_count;

  if (!rc.measure_hessian) {
    rec.measured = false;
    rec.hf_norm = rec.hf_bound;
    rec.outer_eigenvalues = prediction.padded(p);
    rec.spectrum = classify_clusters(rec.outer_eigenvalues, prediction, 0.0);
    return rec;
  }

  rec.measured = true;
  const HessianPair pair = assemble_hessian(w, data);
  const Vector eigs = sym_eigenvalues(pair.h_total);
  rec.hf_norm = symmetric_spectral_norm(pair.h_f);
  rec.hf_block_bound = block_norm_bound(pair.h_f, pair.layout);

  Vector gram = Vector::Zero(p);
  const Vector gram_eigs = sym_eigenvalues(outer_gram(w, data));
  gram.head(std::min(p, gram_eigs.size())) = gram_eigs.head(std::min(p, gram_eigs.size()));
  std::sort(gram.data(), gram.data() + gram.size(), std::greater<>());

  if (flags.validation) {
    const Vector full = sym_eigenvalues(pair.h_o);
    rec.gram_vs_full = (full - gram).cwiseAbs().maxCoeff();
    rec.outer_eigenvalues = full;
  } else {
    rec.outer_eigenvalues = gram;
  }
  if (flags.weyl) rec.weyl_violation = verify_weyl_sandwich(eigs, rec.outer_eigenvalues, rec.hf_norm);
  rec.spectrum = classify_clusters(eigs, prediction, rec.hf_norm);

  if (flags.fd_oracle) {
    const Matrix fd = finite_difference_hessian(w, data);
    rec.fd_error = max_abs(fd - pair.h_total);
    rec.fd_scale = max_abs(pair.h_total);
  }
  if (flags.eigenvectors) {
    rec.eigenvectors = verify_eigenvectors(w, data, weighted_outer_factor(w, data), pair.h_o);
  }
  return rec;
}

void evaluate_checks(RunArtifacts& run) {
  const ResolvedConfig& rc = run.resolved;
  const NetworkDims& dims = rc.dims;
  const Index steps = rc.config.train.steps;
  const double floor = loss_floor(dims);

  Tracker structure("structure_residual");
  structure.add(run.max_structure_residual, 0.0, kStructureTolerance, 0);

  Tracker scalar("scalar_matrix_equivalence");
  scalar.add(run.scalar_matrix_deviation, 0.0,
             kScalarMatrixTol * std::max(1.0, static_cast<double>(steps) / 1000.0), 0);

  Tracker monotone("loss_monotone");
  Tracker decay("loss_decay_bound");
  const double l0 = run.loss_curve.front();
  for (std::size_t t = 0; t < run.loss_curve.size(); ++t) {
    const auto step = static_cast<Index>(t);
    if (t > 0) monotone.add(run.loss_curve[t], run.loss_curve[t - 1], floor, step);
    decay.add(run.loss_curve[t],
              loss_decay_bound(l0, run.alpha_full, rc.eta, dims.depth(), static_cast<double>(t)), floor,
              step);
  }

  Tracker omega("omega_norm_bound");
  Tracker hf("hf_norm_bound");
  Tracker block("hf_block_bound");
  Tracker weyl("weyl_sandwich");
  Tracker gram("gram_vs_full");
  Tracker fd("fd_oracle");
  Tracker vectors("eigenvectors");
  for (const CheckpointRecord& c : run.checkpoints) {
    omega.add(c.omega_norm, c.omega_bound, kBoundRelTol * c.omega_bound, c.step);
    if (!c.measured) continue;
    const double top = c.spectrum.eigenvalues.size() > 0 ? std::abs(c.spectrum.eigenvalues[0]) : 0.0;
    hf.add(c.hf_norm, c.hf_bound, kBoundRelTol * c.hf_bound, c.step);
    block.add(c.hf_norm, c.hf_block_bound, kBoundRelTol * c.hf_block_bound, c.step);
    if (rc.config.analyses.weyl) weyl.add(c.weyl_violation, 0.0, kWeylRelTol * top, c.step);
    if (c.gram_vs_full) gram.add(*c.gram_vs_full, 0.0, kGramTol * std::max(1.0, top), c.step);
    if (c.fd_error) fd.add(*c.fd_error, 0.0, kFdTol * (1.0 + c.fd_scale), c.step);
    if (c.eigenvectors) {
      const double outer_top = c.outer_eigenvalues.size() > 0 ? c.outer_eigenvalues[0] : 0.0;
      vectors.add(c.eigenvectors->max_residual, 0.0, kEigenvectorTol * outer_top, c.step);
      vectors.add(c.eigenvectors->max_rayleigh_error, 0.0, kEigenvectorTol, c.step);
    }
  }
  if (!rc.measure_hessian) {
    const std::string why = rc.config.analyses.assemble_hessian
                                ? fmt::format("P = {} exceeds {}", rc.parameter_count, kHessianCap)
                                : "Hessian assembly disabled";
    hf.skip(why);
    block.skip(why);
    weyl.skip(why);
  }

  Tracker counts("cluster_counts");
  const CheckpointRecord& last = run.final_checkpoint();
  const bool tail = (rc.initial_lambdas.tail(dims.d_star() - dims.rank()).array() != 0.0).any();
  if (!last.measured) {
    counts.skip("spectrum not measured");
  } else if (tail) {
    counts.skip("nonzero tail singular values");
  } else if (!last.spectrum.prediction.gap_condition_ok) {
    counts.skip("gap condition not met at the final checkpoint");
  } else if (const double slack = last.spectrum.weyl_slack;
             last.spectrum.prediction.bulk_interval().first - slack <= slack ||
             last.spectrum.prediction.bulk_interval().second + slack >=
                 last.spectrum.prediction.dominant_interval().first - slack) {
    // Labels are not determined while ||H_f|| is comparable to the gaps.
    counts.skip(fmt::format("||H_f|| = {:.3e} blurs the cluster gaps at the final checkpoint", slack));
  } else {
    counts.add(last.spectrum.counts_match ? 0.0 : 1.0, 0.0, 0.0, last.step);
  }

  run.checks.clear();
  for (const Tracker* t : {&structure, &scalar, &monotone, &decay, &omega, &hf, &block, &weyl, &counts,
                           &gram, &fd, &vectors}) {
    CheckVerdict v = t->verdict();
    if (v.detail == "no samples") continue;
    run.checks.push_back(std::move(v));
  }

  run.max_bound_violation = 0.0;
  for (const CheckVerdict& v : run.checks) {
    if (v.name == "loss_decay_bound" || v.name == "omega_norm_bound" || v.name == "hf_norm_bound" ||
        v.name == "weyl_sandwich") {
      run.max_bound_violation = std::max(run.max_bound_violation, v.worst);
    }
  }
}

RunArtifacts execute(const ResolvedConfig& rc) {
  const NetworkDims& dims = rc.dims;
  const ExperimentConfig& cfg = rc.config;
  const Index depth = dims.depth();
  const Index r = dims.rank();
  const Index ds = dims.d_star();
  const Index steps = cfg.train.steps;

  const std::uint64_t frame_seed = cfg.init.frame_seed.value_or(cfg.train.seed);
  const ExplicitFrames frames = sample_frames(dims, SeededFrames{frame_seed, rc.support});
  WeightStack w = balanced_init(dims, rc.singular_values, frames,
                                BalancedInitOptions{cfg.init.allow_nonzero_tail});
  const DataModel data =
      cfg.data.samples > 0
          ? sampled_data(dims, w.u, w.v, cfg.data.support, cfg.data.samples, cfg.train.seed)
          : whitened_data(dims, w.u, w.v, cfg.data.support);

  const ScalarRun scalar = run_scalar_dynamics(rc.initial_lambdas.head(r), rc.eta, depth, steps);
  Vector tail = rc.initial_lambdas.tail(ds - r);

  RunArtifacts run{rc};
  run.dynamics = scalar.report;
  run.loss_curve.reserve(static_cast<std::size_t>(steps + 1));
  const double power = 2.0 * static_cast<double>(depth) - 2.0;
  run.alpha_full = std::numeric_limits<double>::infinity();

  std::size_t next_checkpoint = 0;
  for (Index t = 0; t <= steps; ++t) {
    const SpectralState state = spectral_state(w);
    require_finite(state.lambdas, "spectral state");
    run.max_structure_residual = std::max(run.max_structure_residual, state.residual);

    const Vector& expected = scalar.trajectory.values[static_cast<std::size_t>(t)];
    double deviation = (state.lambdas.head(r) - expected).cwiseAbs().maxCoeff();
    if (ds > r) deviation = std::max(deviation, (state.lambdas.tail(ds - r) - tail).cwiseAbs().maxCoeff());
    run.scalar_matrix_deviation = std::max(run.scalar_matrix_deviation, deviation);

    // alpha over every coordinate that evolves: the aligned ones, plus
    // nonzero tail entries inside the input support.
    for (Index i = 0; i < ds; ++i) {
      const bool moves = i < r || (i < rc.support && state.lambdas[i] != 0.0);
      if (moves) run.alpha_full = std::min(run.alpha_full, std::pow(std::abs(state.lambdas[i]), power));
    }
    run.loss_curve.push_back(model_excess_loss(state.lambdas, r, rc.support, depth));

    if (next_checkpoint < rc.checkpoints.size() && rc.checkpoints[next_checkpoint] == t) {
      run.checkpoints.push_back(analyze_checkpoint(rc, w, data, state, t));
      ++next_checkpoint;
    }
    if (t < steps) {
      w = gd_step(w, data, rc.eta);
      for (Index i = 0; i < tail.size(); ++i) {
        if (r + i < rc.support) tail[i] = tail_step(tail[i], rc.eta, depth);
      }
    }
  }
  if (!std::isfinite(run.alpha_full)) run.alpha_full = 1.0;
  evaluate_checks(run);
  return run;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& config, RunOptions options) {
  const std::filesystem::path dir = resolve_output_dir(config);
  try {
    const ResolvedConfig rc = resolve_config(config);
    RunArtifacts run = execute(rc);
    if (options.write_files) write_run_artifacts(run, dir);
    return run;
  } catch (const Error& e) {
    if (options.write_files) {
      try {
        write_error_record(e, dir);
      } catch (const Error&) {
        // The original error is more useful than the I/O failure.
      }
    }
    throw;
  }
}

bool SweepSummary::passed() const {
  const bool points_ok =
      std::all_of(points.begin(), points.end(), [](const SweepPoint& p) { return p.status == "pass"; });
  const bool fits_ok = std::all_of(fits.begin(), fits.end(),
                                   [](const RankFit& f) { return f.fit && f.fit->within_envelope; });
  return points_ok && fits_ok;
}

ExperimentConfig sweep_point_config(const ExperimentConfig& base, Index depth, Index rank) {
  require(base.widths.size() >= 3,
          "sweeps need a base network with at least one hidden layer to read the hidden width from");
  const Index hidden = base.widths[1];
  for (std::size_t i = 1; i + 1 < base.widths.size(); ++i) {
    require(base.widths[i] == hidden, "sweeps need a base network with a uniform hidden width");
  }
  require(depth >= 2, fmt::format("sweep depth {} must be at least 2", depth));
  ExperimentConfig out = base;
  out.widths.assign(static_cast<std::size_t>(depth + 1), hidden);
  out.widths.front() = base.widths.front();
  out.widths.back() = base.widths.back();
  out.rank = rank;
  if (out.init.mode == InitMode::kSpectrumList) {
    require(static_cast<Index>(out.init.lambdas.size()) >= rank,
            fmt::format("init.lambdas has {} entries; the sweep needs at least r = {}",
                        out.init.lambdas.size(), rank));
    if (!out.init.allow_nonzero_tail) out.init.lambdas.resize(static_cast<std::size_t>(rank));
  }
  out.name = fmt::format("{}_L{}_r{}", base.name, depth, rank);
  out.output_dir = (resolve_output_dir(base) / fmt::format("L{}_r{}", depth, rank)).string();
  return out;
}

SweepSummary run_sweep(const ExperimentConfig& base, const std::vector<Index>& depths,
                       const std::vector<Index>& ranks, Index workers, RunOptions options) {
  struct Job {
    Index depth;
    Index rank;
  };
  std::vector<Job> jobs;
  for (Index r : ranks) {
    for (Index l : depths) jobs.push_back({l, r});
  }

  SweepSummary summary;
  summary.points.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      SweepPoint& point = summary.points[i];
      point.depth = jobs[i].depth;
      point.rank = jobs[i].rank;
      try {
        const ExperimentConfig cfg = sweep_point_config(base, point.depth, point.rank);
        point.directory = cfg.output_dir;
        const RunArtifacts run = run_experiment(cfg, options);
        const CheckpointRecord& last = run.final_checkpoint();
        point.status = run.passed() ? "pass" : "fail";
        point.ratio = last.spectrum.ratio;
        point.dominant_count = last.spectrum.dominant_count;
        point.bulk_count = last.spectrum.bulk_count;
        point.zero_count = last.spectrum.zero_count;
        point.expected_dominant = last.spectrum.prediction.dominant_count;
        point.expected_bulk = last.spectrum.prediction.bulk_count;
        point.max_bound_violation = run.max_bound_violation;
        point.final_spectrum = last.spectrum;
      } catch (const Error& e) {
        point.status = "error";
        point.error = fmt::format("{}: {}", to_string(e.kind()), e.what());
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max<Index>(workers, 1));
  if (count == 1 || jobs.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < std::min(count, jobs.size()); ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  const std::set<Index> distinct(depths.begin(), depths.end());
  if (distinct.size() >= 3) {
    for (Index r : std::set<Index>(ranks.begin(), ranks.end())) {
      RankFit fit;
      fit.rank = r;
      std::vector<DepthRatio> series;
      for (const SweepPoint& p : summary.points) {
        if (p.rank == r && p.final_spectrum) series.push_back({p.depth, *p.final_spectrum});
      }
      try {
        fit.fit = ratio_theta_L(series);
      } catch (const Error& e) {
        fit.error = e.what();
      }
      summary.fits.push_back(std::move(fit));
    }
  }
  if (options.write_files) write_sweep_summary(summary, resolve_output_dir(base));
  return summary;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config) {
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* root = std::getenv("HBL_OUTPUT_DIR"); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / config.name;
  }
  return std::filesystem::path("hbl_runs") / config.name;
}

}  // namespace hbl
