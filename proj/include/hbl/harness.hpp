#pragma once

#include "hbl/dynamics.hpp"
#include "hbl/errors.hpp"
#include "hbl/hessian.hpp"
#include "hbl/matrix_kit.hpp"
#include "hbl/network.hpp"
#include "hbl/spectrum.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace hbl {

enum class InitMode { kUsi, kSpectrumList };

struct InitConfig {
  InitMode mode = InitMode::kUsi;
  double mu = 0.5;              // USI: shared per-layer value lambda_{i,0} = mu
  std::vector<double> lambdas;  // spectrum-list: per-layer lambda_{i,0}, length r or d*
  std::optional<std::uint64_t> frame_seed;  // defaults to train.seed
  bool allow_nonzero_tail = false;
};

struct TrainConfig {
  std::optional<double> eta;  // absolute step size; wins over eta_fraction
  double eta_fraction = 0.5;  // fraction of max_step_size(L, M)
  Index steps = 200;
  Index checkpoint_stride = 0;     // 0 selects the geometric schedule
  std::vector<Index> checkpoints;  // explicit list, overrides the stride
  std::uint64_t seed = 1;
};

struct DataConfig {
  InputSupport support = InputSupport::kDStar;
  Index samples = 0;  // 0 selects the population model
};

struct AnalysisFlags {
  bool assemble_hessian = true;
  bool fd_oracle = false;
  bool eigenvectors = false;
  bool weyl = true;
  bool validation = false;  // full P x P eigendecomposition of H_o as well
};

struct ExperimentConfig {
  std::string name = "run";
  std::vector<Index> widths;
  Index rank = 0;
  DataConfig data;
  InitConfig init;
  TrainConfig train;
  AnalysisFlags analyses;
  std::string output_dir;  // empty: resolved from HBL_OUTPUT_DIR
};

inline constexpr Index kHessianCap = 3000;

/// A config after validation, with every derived quantity pinned.
struct ResolvedConfig {
  ResolvedConfig(ExperimentConfig c, NetworkDims d) : config(std::move(c)), dims(std::move(d)) {}

  ExperimentConfig config;
  NetworkDims dims;
  Vector initial_lambdas;  // length d*
  Vector singular_values;  // initial_lambdas^L
  double m = 1.0;
  double max_eta = 0.0;
  double eta = 0.0;
  std::vector<Index> checkpoints;
  Index parameter_count = 0;
  Index support = 0;
  bool measure_hessian = true;
};

/// Validates every module precondition before compute. Throws ConfigError
/// (or DimensionError / DomainError) naming the violated precondition.
ResolvedConfig resolve_config(const ExperimentConfig& config);

/// Geometric schedule 0, 1, 2, 4, ... plus the final step, or a fixed stride.
std::vector<Index> checkpoint_schedule(Index steps, Index stride);

struct CheckVerdict {
  std::string name;
  bool passed = true;
  double worst = 0.0;      // worst measured excess over the bound (<= 0 passes)
  double tolerance = 0.0;  // absolute allowance added to the bound
  std::string detail;
};

struct CheckpointRecord {
  Index step = 0;
  Vector lambdas;  // first r coordinates of the shared spectrum
  double lambda_max = 0.0;
  double excess_loss = 0.0;        // closed form 1/2 sum (1 - lambda^L)^2
  double excess_loss_trace = 0.0;  // 1/2 tr(Omega Sxx^+ Omega^T)
  double structure_residual = 0.0;
  double omega_norm = 0.0;
  double omega_bound = 0.0;
  bool measured = false;  // Hessian assembled and decomposed
  double hf_norm = 0.0;   // measured, or the analytic bound when not measured
  double hf_bound = 0.0;
  double hf_block_bound = 0.0;
  double weyl_violation = 0.0;
  std::optional<double> gram_vs_full;  // validation mode
  std::optional<double> fd_error;      // fd_oracle
  double fd_scale = 0.0;               // max |H| entry, the oracle tolerance scale
  std::optional<EigenvectorCheck> eigenvectors;
  Vector outer_eigenvalues;  // spectrum of H_o padded to P (predicted when not measured)
  SpectrumReport spectrum;
};

struct RunArtifacts {
  explicit RunArtifacts(ResolvedConfig rc) : resolved(std::move(rc)) {}

  ResolvedConfig resolved;
  std::vector<CheckpointRecord> checkpoints;
  std::vector<double> loss_curve;  // closed-form excess loss at every step
  DynamicsReport dynamics;         // scalar recursion report (burn-in window)
  double alpha_full = 0.0;         // min over every step of min_i lambda^{2L-2}
  double scalar_matrix_deviation = 0.0;
  double max_structure_residual = 0.0;
  double max_bound_violation = 0.0;
  std::vector<CheckVerdict> checks;

  bool passed() const;
  const CheckpointRecord& final_checkpoint() const { return checkpoints.back(); }
};

struct RunOptions {
  bool write_files = true;
};

/// Balanced init, GD loop with checkpoint analyses, and the per-run checks.
/// On a library error the error record is written to the output directory
/// (when writing files) and the error is rethrown.
RunArtifacts run_experiment(const ExperimentConfig& config, RunOptions options = {});

struct SweepPoint {
  Index depth = 0;
  Index rank = 0;
  std::string status;  // "pass", "fail" or "error"
  std::string error;
  std::string directory;
  double ratio = 0.0;
  Index dominant_count = 0;
  Index bulk_count = 0;
  Index zero_count = 0;
  Index expected_dominant = 0;
  Index expected_bulk = 0;
  double max_bound_violation = 0.0;
  std::optional<SpectrumReport> final_spectrum;
};

struct RankFit {
  Index rank = 0;
  std::optional<RatioFit> fit;
  std::string error;
};

struct SweepSummary {
  std::vector<SweepPoint> points;
  std::vector<RankFit> fits;
  bool passed() const;
};

/// Runs every (L, r) grid point derived from `base`, in parallel up to
/// `workers`. Per-point failures are recorded and the sweep continues.
SweepSummary run_sweep(const ExperimentConfig& base, const std::vector<Index>& depths,
                       const std::vector<Index>& ranks, Index workers = 1, RunOptions options = {});

ExperimentConfig sweep_point_config(const ExperimentConfig& base, Index depth, Index rank);

// Config file handling (JSON with comments allowed).
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);

/// Output directory: config.output_dir, else $HBL_OUTPUT_DIR/<name>, else
/// hbl_runs/<name>.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

// Artifact writers. Formats are documented in docs/artifacts.md.
void write_run_artifacts(const RunArtifacts& artifacts, const std::filesystem::path& dir);
void write_error_record(const Error& error, const std::filesystem::path& dir);
void write_sweep_summary(const SweepSummary& summary, const std::filesystem::path& dir);

std::string trajectory_csv(const RunArtifacts& artifacts);
std::string spectrum_csv(const CheckpointRecord& checkpoint);
std::string summary_json(const RunArtifacts& artifacts);

/// Rebuilds a summary from artifacts already on disk. Prints a short table
/// to `out` and returns the process exit code (0 all checks passed).
int report_directory(const std::filesystem::path& dir, std::ostream& out);

}  // namespace hbl
