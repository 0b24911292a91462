#include "hbl/spectrum.hpp"

#include "hbl/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <set>
#include <tuple>

namespace hbl {

std::string_view to_string(Cluster cluster) {
  switch (cluster) {
    case Cluster::kDominant: return "dominant";
    case Cluster::kBulk: return "bulk";
    case Cluster::kZero: return "zero";
  }
  return "zero";
}

namespace {

double power_2l2(double x, Index depth) {
  return std::pow(x, 2.0 * static_cast<double>(depth - 1));
}

Vector sorted_descending(Vector v) {
  std::sort(v.data(), v.data() + v.size(), std::greater<>());
  return v;
}

}  // namespace

std::pair<double, double> SpectrumPrediction::dominant_interval() const {
  const auto l = static_cast<double>(depth);
  return {l * power_2l2(m - delta, depth), l * power_2l2(m + delta, depth)};
}

std::pair<double, double> SpectrumPrediction::bulk_interval() const {
  return {power_2l2(m - delta, depth), power_2l2(m + delta, depth)};
}

Vector SpectrumPrediction::padded(Index n) const {
  Vector out = Vector::Zero(n);
  Index k = 0;
  for (Index i = 0; i < dominant_values.size() && k < n; ++i) out[k++] = dominant_values[i];
  for (Index i = 0; i < bulk_values.size() && k < n; ++i) out[k++] = bulk_values[i];
  return sorted_descending(std::move(out));
}

double pair_eigenvalue(double lambda_i, double lambda_j, Index depth) {
  double total = 0.0;
  for (Index l = 1; l <= depth; ++l) {
    total += std::pow(lambda_i, 2.0 * static_cast<double>(depth - l)) *
             std::pow(lambda_j, 2.0 * static_cast<double>(l - 1));
  }
  return total;
}

SpectrumPrediction predict_spectrum(const Vector& lambdas, const NetworkDims& dims,
                                    Index input_support) {
  const Index r = lambdas.size();
  const Index depth = dims.depth();
  if (r < 1 || r > dims.d_star()) {
    throw DomainError(fmt::format("predict_spectrum: r = {} must lie in [1, d* = {}]", r, dims.d_star()));
  }
  const Index q = input_support == 0 ? dims.d_star() : input_support;
  if (q < r || q > dims.input()) {
    throw DomainError(fmt::format("predict_spectrum: input support {} must lie in [r, d_0]", q));
  }
  for (Index i = 0; i < r; ++i) {
    if (!(lambdas[i] > 0.0) || !std::isfinite(lambdas[i])) {
      throw DomainError(fmt::format("predict_spectrum: lambda[{}] = {} is not positive", i, lambdas[i]));
    }
  }

  SpectrumPrediction p;
  p.depth = depth;
  p.rank = r;
  p.lambdas = lambdas;
  p.dominant_values.resize(r * r);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < r; ++j) p.dominant_values[i * r + j] = pair_eigenvalue(lambdas[i], lambdas[j], depth);
  }
  p.dominant_values = sorted_descending(std::move(p.dominant_values));

  // u_i (x) v_j with exactly one index inside the rank: r (q - r) pairs from
  // the input side and r (d_L - r) from the output side.
  const Index per_lambda = (q - r) + (dims.output() - r);
  p.bulk_values.resize(r * per_lambda);
  for (Index i = 0; i < r; ++i) {
    p.bulk_values.segment(i * per_lambda, per_lambda).setConstant(power_2l2(lambdas[i], depth));
  }
  p.bulk_values = sorted_descending(std::move(p.bulk_values));

  p.dominant_count = r * r;
  p.bulk_count = r * per_lambda;
  p.gram_size = dims.output() * dims.input();
  p.gram_zero_count = p.gram_size - p.dominant_count - p.bulk_count;

  const double hi = lambdas.maxCoeff();
  const double lo = lambdas.minCoeff();
  p.m = 0.5 * (hi + lo);
  p.delta = 0.5 * (hi - lo);
  const auto l = static_cast<double>(depth);
  p.gap_condition_ok = (p.m - p.delta) > 0.0 &&
                       (p.m + p.delta) / (p.m - p.delta) < std::pow(l, 1.0 / (2.0 * (l - 1.0)));
  return p;
}

SpectrumReport classify_clusters(const Vector& eigenvalues, const SpectrumPrediction& prediction,
                                 double slack) {
  if (slack < 0.0) throw DomainError("classify_clusters: slack must be nonnegative");
  for (Index k = 1; k < eigenvalues.size(); ++k) {
    if (eigenvalues[k] > eigenvalues[k - 1]) {
      throw ContractViolation("classify_clusters: eigenvalues must be sorted descending");
    }
  }
  const Index n = eigenvalues.size();
  SpectrumReport report;
  report.eigenvalues = eigenvalues;
  report.prediction = prediction;
  report.weyl_slack = slack;
  report.cluster_of.assign(static_cast<std::size_t>(n), Cluster::kZero);
  report.ambiguous.assign(static_cast<std::size_t>(n), false);
  report.predicted_value = Vector::Zero(n);

  const double lambda_max = n == 0 ? 0.0 : eigenvalues.cwiseAbs().maxCoeff();
  report.zero_threshold = std::max(slack, 1e-8 * lambda_max);

  const auto [dom_lo, dom_hi] = prediction.dominant_interval();
  const auto [bulk_lo, bulk_hi] = prediction.bulk_interval();
  auto nearest_distance = [](const Vector& values, double x) {
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < values.size(); ++i) best = std::min(best, std::abs(values[i] - x));
    return best;
  };

  for (Index k = 0; k < n; ++k) {
    const double x = eigenvalues[k];
    auto idx = static_cast<std::size_t>(k);
    if (std::abs(x) <= report.zero_threshold) continue;
    const bool in_dom = x >= dom_lo - slack && x <= dom_hi + slack;
    const bool in_bulk = x >= bulk_lo - slack && x <= bulk_hi + slack;
    if (in_dom != in_bulk) {
      report.cluster_of[idx] = in_dom ? Cluster::kDominant : Cluster::kBulk;
      continue;
    }
    report.ambiguous[idx] = true;
    report.cluster_of[idx] = nearest_distance(prediction.dominant_values, x) <=
                                     nearest_distance(prediction.bulk_values, x)
                                 ? Cluster::kDominant
                                 : Cluster::kBulk;
  }

  // Rank-matched predictions within each cluster.
  auto assign = [&](Cluster cluster, const Vector& predicted) {
    Index rank = 0;
    double worst = 0.0;
    for (Index k = 0; k < n; ++k) {
      if (report.cluster_of[static_cast<std::size_t>(k)] != cluster) continue;
      double value = 0.0;
      if (rank < predicted.size()) {
        value = predicted[rank];
      } else if (predicted.size() > 0) {
        value = predicted[predicted.size() - 1];
      }
      report.predicted_value[k] = value;
      worst = std::max(worst, std::abs(eigenvalues[k] - value));
      ++rank;
    }
    return std::pair{rank, worst};
  };
  std::tie(report.dominant_count, report.match_error_dominant) =
      assign(Cluster::kDominant, prediction.dominant_values);
  std::tie(report.bulk_count, report.match_error_bulk) = assign(Cluster::kBulk, prediction.bulk_values);
  std::tie(report.zero_count, report.match_error_zero) = assign(Cluster::kZero, Vector());

  report.expected_zero_count = n - prediction.dominant_count - prediction.bulk_count;
  report.counts_match = report.dominant_count == prediction.dominant_count &&
                        report.bulk_count == prediction.bulk_count &&
                        report.zero_count == report.expected_zero_count;

  double dom_sum = 0.0, bulk_sum = 0.0;
  double dom_min = std::numeric_limits<double>::infinity(), dom_max = -dom_min;
  double bulk_min = dom_min, bulk_max = -dom_min;
  for (Index k = 0; k < n; ++k) {
    const double x = eigenvalues[k];
    switch (report.cluster_of[static_cast<std::size_t>(k)]) {
      case Cluster::kDominant:
        dom_sum += x;
        dom_min = std::min(dom_min, x);
        dom_max = std::max(dom_max, x);
        break;
      case Cluster::kBulk:
        bulk_sum += x;
        bulk_min = std::min(bulk_min, x);
        bulk_max = std::max(bulk_max, x);
        break;
      case Cluster::kZero:
        break;
    }
  }
  if (report.dominant_count > 0 && report.bulk_count > 0) {
    report.ratio = (dom_sum / static_cast<double>(report.dominant_count)) /
                   (bulk_sum / static_cast<double>(report.bulk_count));
    report.ratio_min = dom_min / bulk_max;
    report.ratio_max = dom_max / bulk_min;
  }

  if (n > 0) {
    const Vector expected = prediction.padded(n);
    report.prediction_deviation = (eigenvalues - expected).cwiseAbs().maxCoeff();
  }
  return report;
}

std::vector<Cluster> classify_clusters_kmeans(const Vector& eigenvalues, double zero_threshold) {
  const Index n = eigenvalues.size();
  std::vector<Cluster> labels(static_cast<std::size_t>(n), Cluster::kZero);
  std::vector<Index> active;
  for (Index k = 0; k < n; ++k) {
    if (eigenvalues[k] > zero_threshold) active.push_back(k);
  }
  if (active.empty()) return labels;
  std::vector<double> logs;
  for (Index k : active) logs.push_back(std::log(eigenvalues[k]));
  double hi = *std::max_element(logs.begin(), logs.end());
  double lo = *std::min_element(logs.begin(), logs.end());
  std::vector<bool> upper(logs.size(), true);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < logs.size(); ++i) {
      const bool next = std::abs(logs[i] - hi) <= std::abs(logs[i] - lo);
      changed |= next != upper[i];
      upper[i] = next;
    }
    double sum_hi = 0.0, sum_lo = 0.0;
    std::size_t n_hi = 0, n_lo = 0;
    for (std::size_t i = 0; i < logs.size(); ++i) {
      if (upper[i]) {
        sum_hi += logs[i];
        ++n_hi;
      } else {
        sum_lo += logs[i];
        ++n_lo;
      }
    }
    if (n_hi > 0) hi = sum_hi / static_cast<double>(n_hi);
    if (n_lo > 0) lo = sum_lo / static_cast<double>(n_lo);
    if (!changed && iter > 0) break;
  }
  for (std::size_t i = 0; i < active.size(); ++i) {
    labels[static_cast<std::size_t>(active[i])] = upper[i] ? Cluster::kDominant : Cluster::kBulk;
  }
  return labels;
}

double verify_weyl_sandwich(const Vector& h_eigs, const Vector& h_o_eigs, double hf_norm) {
  if (h_eigs.size() != h_o_eigs.size()) {
    throw ContractViolation(fmt::format("verify_weyl_sandwich: lengths differ ({} vs {})",
                                        h_eigs.size(), h_o_eigs.size()));
  }
  double worst = 0.0;
  for (Index k = 0; k < h_eigs.size(); ++k) {
    worst = std::max(worst, std::abs(h_eigs[k] - h_o_eigs[k]) - hf_norm);
  }
  return worst;
}

EigenvectorCheck verify_eigenvectors(const WeightStack& w, const DataModel& data,
                                     const Matrix& weighted_factor, const Matrix& h_o) {
  const Index depth = w.depth();
  const Index r = data.rank;
  const Index dl = w.u.rows();
  const Index d0 = w.v.rows();
  const Index q = data.support > 0 ? data.support : w.u.cols();
  if (weighted_factor.cols() != dl * d0 || weighted_factor.rows() != h_o.rows()) {
    throw ContractViolation("verify_eigenvectors: factor shape does not match the stack");
  }
  const Vector lambdas = spectral_state(w).lambdas;
  const Matrix u_basis = complete_basis(w.u);
  const Matrix v_basis = complete_basis(w.v);

  EigenvectorCheck check;
  for (Index i = 0; i < dl; ++i) {
    for (Index j = 0; j < d0; ++j) {
      const bool i_in = i < r;
      const bool j_in = j < r;
      double predicted = 0.0;
      bool nonzero = true;
      if (i_in && j_in) {
        predicted = pair_eigenvalue(lambdas[i], lambdas[j], depth);
      } else if (i_in && j < q) {
        predicted = power_2l2(lambdas[i], depth);
      } else if (j_in) {
        predicted = power_2l2(lambdas[j], depth);
      } else {
        nonzero = false;
      }
      Vector pair(dl * d0);
      for (Index a = 0; a < dl; ++a) {
        pair.segment(a * d0, d0) = u_basis(a, i) * v_basis.col(j);
      }
      const Vector v = weighted_factor * pair;
      const double norm = v.norm();
      ++check.pairs_checked;
      if (!nonzero) {
        check.max_zero_pair_norm = std::max(check.max_zero_pair_norm, norm);
        continue;
      }
      if (norm < 1e-12) {
        throw StructureError(fmt::format(
            "verify_eigenvectors: pair ({}, {}) should carry eigenvalue {} but ||v|| = {:.3e}", i, j,
            predicted, norm));
      }
      const Vector hv = h_o * v;
      const double rho = v.dot(hv) / (norm * norm);
      check.max_residual = std::max(check.max_residual, (hv - rho * v).norm() / norm);
      check.max_rayleigh_error = std::max(check.max_rayleigh_error, std::abs(rho - predicted));
    }
  }
  return check;
}

std::pair<double, double> ratio_envelope(const SpectrumPrediction& prediction, double slack) {
  const auto [dom_lo, dom_hi] = prediction.dominant_interval();
  const auto [bulk_lo, bulk_hi] = prediction.bulk_interval();
  const double lower = (dom_lo - slack) / (bulk_hi + slack);
  const double upper = bulk_lo - slack > 0.0 ? (dom_hi + slack) / (bulk_lo - slack)
                                             : std::numeric_limits<double>::infinity();
  return {lower, upper};
}

RatioFit ratio_theta_L(const std::vector<DepthRatio>& sweep) {
  std::set<Index> depths;
  for (const auto& point : sweep) depths.insert(point.depth);
  if (depths.size() < 3) {
    throw ContractViolation(
        fmt::format("ratio_theta_L: need at least 3 distinct depths, got {}", depths.size()));
  }
  const auto n = static_cast<double>(sweep.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  RatioFit fit;
  fit.within_envelope = true;
  for (const auto& point : sweep) {
    const auto x = static_cast<double>(point.depth);
    const double y = point.report.ratio;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    fit.max_rel_dev = std::max(fit.max_rel_dev, std::abs(y - x) / x);
    const auto envelope = ratio_envelope(point.report.prediction, point.report.weyl_slack);
    fit.envelopes.push_back(envelope);
    // Relative rounding allowance: a uniform spectrum sits exactly on the edge.
    if (!(y >= envelope.first * (1.0 - 1e-12) && y <= envelope.second * (1.0 + 1e-12))) {
      fit.within_envelope = false;
    }
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

}  // namespace hbl
