#pragma once

#include "hbl/matrix_kit.hpp"

#include <optional>
#include <vector>

namespace hbl {

/// One step of the reduced eigenvalue recursion
/// lambda <- lambda - eta * lambda^{2L-1} + eta * lambda^{L-1}.
double lambda_step(double lambda, double eta, Index depth);

/// min{1/L, 2 / ((2L - 1) M^{2L-2})}. Step sizes must be strictly below it.
double max_step_size(Index depth, double m);

/// M = max{1, max_i lambda_i}.
double bound_m(const Vector& lambdas);

struct EigenTrajectory {
  std::vector<Vector> values;  // values[t][i] = lambda_{i,t}, t = 0..steps
  double eta = 0.0;
  Index depth = 0;
  double m = 1.0;
};

struct DynamicsReport {
  double alpha = 0.0;  // min over the post-burn-in window of min_i lambda^{2L-2}
  double c_min = 0.0;  // min over the whole run of min_i lambda
  std::optional<Index> converged_at;
  double predicted_decay_rate = 0.0;  // 2 L alpha eta
  Index window_start = 0;
};

struct ScalarRun {
  EigenTrajectory trajectory;
  DynamicsReport report;
};

struct ScalarDynamicsOptions {
  double burn_in_fraction = 0.1;
  double convergence_tolerance = 1e-10;
};

/// Iterates the recursion for every coordinate of lambda0.
/// Throws ConfigError if eta is not below max_step_size or a starting value
/// is outside (0, M], and DynamicsFailure if an iterate leaves (0, 2M].
ScalarRun run_scalar_dynamics(const Vector& lambda0, double eta, Index depth, Index steps,
                              ScalarDynamicsOptions options = {});

/// Smallest min_i lambda_{i,t}^{2L-2} over t in [first, last].
double window_alpha(const EigenTrajectory& trajectory, Index first, Index last);

/// 1/2 sum_i (1 - lambda_i^L)^2
double closed_form_excess_loss(const Vector& lambdas, Index depth);

/// l0 * exp(-2 L alpha eta t)
double loss_decay_bound(double l0, double alpha, double eta, Index depth, double t);

}  // namespace hbl
