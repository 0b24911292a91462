#pragma once

#include "hbl/matrix_kit.hpp"
#include "hbl/network.hpp"

#include <string_view>
#include <utility>
#include <vector>

namespace hbl {

enum class Cluster : unsigned char { kDominant, kBulk, kZero };

std::string_view to_string(Cluster cluster);

/// Closed-form spectrum of the outer-product Hessian for a given shared
/// spectrum lambda_1..lambda_r.
struct SpectrumPrediction {
  Index depth = 0;
  Index rank = 0;
  Vector lambdas;
  Vector dominant_values;  // r^2 values nu_{i,j}, descending
  Vector bulk_values;      // lambda_i^{2(L-1)} with multiplicity, descending
  Index dominant_count = 0;
  Index bulk_count = 0;
  Index gram_zero_count = 0;  // zeros among the d_L d_0 Gram eigenvalues
  Index gram_size = 0;
  double m = 0.0;
  double delta = 0.0;
  bool gap_condition_ok = false;

  /// [L (m - delta)^{2(L-1)}, L (m + delta)^{2(L-1)}]
  std::pair<double, double> dominant_interval() const;
  /// [(m - delta)^{2(L-1)}, (m + delta)^{2(L-1)}]
  std::pair<double, double> bulk_interval() const;
  /// Full predicted multiset of length n (zeros appended), descending.
  Vector padded(Index n) const;
};

/// sum_{l=1}^{L} lambda_i^{2(L-l)} lambda_j^{2(l-1)}
double pair_eigenvalue(double lambda_i, double lambda_j, Index depth);

/// `input_support` is the number of input directions seen by the data
/// (0 means d*). Throws DomainError if r > d* or a lambda is not positive.
SpectrumPrediction predict_spectrum(const Vector& lambdas, const NetworkDims& dims,
                                    Index input_support = 0);

struct SpectrumReport {
  Vector eigenvalues;  // descending
  std::vector<Cluster> cluster_of;
  Vector predicted_value;       // rank-matched prediction per eigenvalue
  std::vector<bool> ambiguous;  // inside both widened intervals, or neither
  Index dominant_count = 0;
  Index bulk_count = 0;
  Index zero_count = 0;
  Index expected_zero_count = 0;
  bool counts_match = false;
  double ratio = 0.0;  // mean(dominant) / mean(bulk); 0 when a cluster is empty
  double ratio_min = 0.0;  // min dominant / max bulk
  double ratio_max = 0.0;  // max dominant / min bulk
  double weyl_slack = 0.0;
  double zero_threshold = 0.0;
  double match_error_dominant = 0.0;
  double match_error_bulk = 0.0;
  double match_error_zero = 0.0;
  // max_k |eigenvalues[k] - prediction.padded(n)[k]|
  double prediction_deviation = 0.0;
  SpectrumPrediction prediction;
};

/// Labels each eigenvalue by the predicted interval it falls into, with the
/// intervals widened by `slack` (the measured ||H_f||_2). Count mismatches
/// are recorded in the report.
SpectrumReport classify_clusters(const Vector& eigenvalues, const SpectrumPrediction& prediction,
                                 double slack);

/// Exploratory labeling without theory bins: 2-means on the logarithms of the
/// eigenvalues above `zero_threshold`.
std::vector<Cluster> classify_clusters_kmeans(const Vector& eigenvalues, double zero_threshold);

/// max_k max(0, |h_eigs[k] - h_o_eigs[k]| - hf_norm). Both inputs descending
/// and of equal length, otherwise ContractViolation.
double verify_weyl_sandwich(const Vector& h_eigs, const Vector& h_o_eigs, double hf_norm);

struct EigenvectorCheck {
  double max_residual = 0.0;        // max ||H_o v - rho v|| / ||v||
  double max_rayleigh_error = 0.0;  // max |rho - predicted|
  double max_zero_pair_norm = 0.0;  // max ||F (u_i (x) v_j)|| over zero-space pairs
  Index pairs_checked = 0;
};

/// Builds v = F (u_i (x) v_j) for every index pair, where F is the weighted
/// outer factor (H_o = F F^T), and checks that v is an eigenvector of h_o
/// with the predicted eigenvalue. Throws StructureError if a pair that should
/// carry a nonzero eigenvalue produces ||v|| < 1e-12.
EigenvectorCheck verify_eigenvectors(const WeightStack& w, const DataModel& data,
                                     const Matrix& weighted_factor, const Matrix& h_o);

struct DepthRatio {
  Index depth = 0;
  SpectrumReport report;
};

struct RatioFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_rel_dev = 0.0;  // max_L |ratio_L - L| / L
  bool within_envelope = false;
  std::vector<std::pair<double, double>> envelopes;
};

/// Least-squares fit of the mean dominant/bulk ratio against depth, plus the
/// two-sided envelope check for every depth. Needs at least three distinct
/// depths (ContractViolation otherwise).
RatioFit ratio_theta_L(const std::vector<DepthRatio>& sweep);

/// Envelope on the dominant/bulk ratio implied by the interval structure,
/// widened by `slack`.
std::pair<double, double> ratio_envelope(const SpectrumPrediction& prediction, double slack);

}  // namespace hbl
