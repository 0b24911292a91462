#include "hbl/dynamics.hpp"

#include "hbl/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hbl {

double lambda_step(double lambda, double eta, Index depth) {
  const auto l = static_cast<int>(depth);
  // Grouped so that the fixed points 0 and 1 are reproduced exactly.
  return lambda + eta * (std::pow(lambda, l - 1) - std::pow(lambda, 2 * l - 1));
}

double max_step_size(Index depth, double m) {
  const auto l = static_cast<double>(depth);
  return std::min(1.0 / l, 2.0 / ((2.0 * l - 1.0) * std::pow(m, 2.0 * l - 2.0)));
}

double bound_m(const Vector& lambdas) {
  return lambdas.size() == 0 ? 1.0 : std::max(1.0, lambdas.maxCoeff());
}

double window_alpha(const EigenTrajectory& trajectory, Index first, Index last) {
  const double power = 2.0 * static_cast<double>(trajectory.depth) - 2.0;
  double alpha = std::numeric_limits<double>::infinity();
  for (Index t = first; t <= last; ++t) {
    const Vector& row = trajectory.values[static_cast<std::size_t>(t)];
    if (row.size() == 0) continue;
    alpha = std::min(alpha, std::pow(row.minCoeff(), power));
  }
  return alpha;
}

ScalarRun run_scalar_dynamics(const Vector& lambda0, double eta, Index depth, Index steps,
                              ScalarDynamicsOptions options) {
  if (depth < 2) throw ConfigError(fmt::format("depth must be at least 2, got {}", depth));
  if (steps < 0) throw ConfigError("step count must be nonnegative");
  const double m = bound_m(lambda0);
  const double limit = max_step_size(depth, m);
  if (!(eta > 0.0 && eta < limit)) {
    throw ConfigError(fmt::format(
        "step size eta = {} must lie in (0, {}) = (0, min{{1/L, 2/((2L-1) M^(2L-2))}}) with M = {}",
        eta, limit, m));
  }
  for (Index i = 0; i < lambda0.size(); ++i) {
    if (!(lambda0[i] > 0.0 && lambda0[i] <= m)) {
      throw ConfigError(fmt::format("lambda0[{}] = {} is outside (0, M]", i, lambda0[i]));
    }
  }

  ScalarRun run;
  run.trajectory.eta = eta;
  run.trajectory.depth = depth;
  run.trajectory.m = m;
  auto& values = run.trajectory.values;
  values.reserve(static_cast<std::size_t>(steps + 1));
  values.push_back(lambda0);
  for (Index t = 1; t <= steps; ++t) {
    Vector next = values.back();
    for (Index i = 0; i < next.size(); ++i) {
      next[i] = lambda_step(next[i], eta, depth);
      if (!(next[i] > 0.0 && next[i] <= 2.0 * m)) {
        throw DynamicsFailure(fmt::format(
            "coordinate {} left (0, 2M] at step {} (value {}); the step-size contract is broken", i,
            t, next[i]));
      }
    }
    values.push_back(std::move(next));
  }

  DynamicsReport& report = run.report;
  report.window_start = static_cast<Index>(
      std::floor(options.burn_in_fraction * static_cast<double>(steps)));
  report.alpha = lambda0.size() == 0 ? 1.0 : window_alpha(run.trajectory, report.window_start, steps);
  report.c_min = std::numeric_limits<double>::infinity();
  for (const Vector& row : values) {
    if (row.size() > 0) report.c_min = std::min(report.c_min, row.minCoeff());
  }
  if (lambda0.size() == 0) report.c_min = 1.0;
  for (Index t = 0; t <= steps; ++t) {
    const Vector& row = values[static_cast<std::size_t>(t)];
    const double gap = row.size() == 0 ? 0.0 : (row.array() - 1.0).abs().maxCoeff();
    if (gap < options.convergence_tolerance) {
      report.converged_at = t;
      break;
    }
  }
  report.predicted_decay_rate = 2.0 * static_cast<double>(depth) * report.alpha * eta;
  return run;
}

double closed_form_excess_loss(const Vector& lambdas, Index depth) {
  double total = 0.0;
  for (Index i = 0; i < lambdas.size(); ++i) {
    const double gap = 1.0 - std::pow(lambdas[i], static_cast<double>(depth));
    total += gap * gap;
  }
  return 0.5 * total;
}

double loss_decay_bound(double l0, double alpha, double eta, Index depth, double t) {
  return l0 * std::exp(-2.0 * static_cast<double>(depth) * alpha * eta * t);
}

}  // namespace hbl
