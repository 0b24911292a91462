#pragma once

#include "hbl/matrix_kit.hpp"

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace hbl {

/// Layer widths d_0..d_L of a deep linear network plus the effective rank r
/// of the target map.
class NetworkDims {
 public:
  /// Validates the width condition min(d_1..d_{L-1}) >= d* and 1 <= r <= d*.
  /// Throws ConfigError on violation.
  NetworkDims(std::vector<Index> widths, Index rank);

  /// Convenience for the uniform-hidden-width family used in experiments.
  static NetworkDims uniform(Index depth, Index input, Index hidden, Index output, Index rank);

  Index depth() const { return static_cast<Index>(widths_.size()) - 1; }
  Index width(Index l) const { return widths_.at(static_cast<std::size_t>(l)); }
  Index input() const { return widths_.front(); }
  Index output() const { return widths_.back(); }
  Index rank() const { return rank_; }
  Index d_star() const { return std::min(input(), output()); }
  const std::vector<Index>& widths() const { return widths_; }

  /// Flattened parameter count, sum over layers of d_l * d_{l-1}.
  Index parameter_count() const;

 private:
  std::vector<Index> widths_;
  Index rank_;
};

/// The L weight matrices plus the singular frames fixed at initialization.
/// layers[k] is W^{k+1} with shape d_{k+1} x d_k.
struct WeightStack {
  std::vector<Matrix> layers;
  Matrix u;  // d_L x d*
  Matrix v;  // d_0 x d*

  Index depth() const { return static_cast<Index>(layers.size()); }
};

/// Population second moments of the data.
struct DataModel {
  Matrix sigma_xx;  // d_0 x d_0
  Matrix sigma_yx;  // d_L x d_0
  Index rank = 0;
  // Dimension of the input support when sigma_xx is a padded identity, 0 otherwise.
  Index support = 0;
};

enum class InputSupport { kDStar, kRank };

/// Whitened population model: sigma_xx = pad(I_q), sigma_yx = U pad(I_r) V^T with
/// q = d* or q = r.
DataModel whitened_data(const NetworkDims& dims, const Matrix& u, const Matrix& v,
                        InputSupport support = InputSupport::kDStar);

/// Finite-sample variant: N inputs x = pad(I_q) z with z standard Gaussian,
/// targets y = sigma_yx x. Returns the empirical second moments.
DataModel sampled_data(const NetworkDims& dims, const Matrix& u, const Matrix& v,
                       InputSupport support, Index samples, std::uint64_t seed);

Index support_dimension(const NetworkDims& dims, InputSupport support);

struct ExplicitFrames {
  Matrix u;
  Matrix v;
};

/// Frames taken from the SVD of a seeded d_L x d_0 Gaussian matrix whose
/// columns beyond `support` are zeroed, so the right frame lies inside the
/// support of the whitened input covariance.
struct SeededFrames {
  std::uint64_t seed = 0;
  Index support = 0;  // 0 means d*, the default whitened support
};

using FrameSource = std::variant<ExplicitFrames, SeededFrames>;

struct BalancedInitOptions {
  // When false, the trailing d* - r singular values must be exactly zero.
  bool allow_nonzero_tail = false;
};

/// Balanced initialization: W^L = pad(U S), middle layers pad(S), W^1 = pad(S V^T)
/// with S = diag(singular_values)^{1/L}.
WeightStack balanced_init(const NetworkDims& dims, const Vector& singular_values,
                          const FrameSource& frames, BalancedInitOptions options = {});

/// Frames of the requested shape drawn as described for SeededFrames.
ExplicitFrames sample_frames(const NetworkDims& dims, const SeededFrames& source);

/// Product W^{hi} ... W^{lo+1} of layers[lo..hi) (0-based, half open).
/// An empty range gives the identity of size d_lo.
Matrix chain_product(const WeightStack& w, Index lo, Index hi);

/// W^L ... W^1.
Matrix end_to_end(const WeightStack& w);

/// Omega = W^{L:1} sigma_xx - sigma_yx.
Matrix residual(const WeightStack& w, const DataModel& data);

/// Gradient of the population loss with respect to layers[layer] (0-based).
Matrix population_gradient(const WeightStack& w, const DataModel& data, Index layer);

/// One synchronous gradient-descent step on every layer.
WeightStack gd_step(const WeightStack& w, const DataModel& data, double eta);

/// Population loss up to the data constant: 1/2 tr(P Sxx P^T) - tr(P Syx^T).
double population_loss(const WeightStack& w, const DataModel& data);

/// Excess loss from the trace formula, 1/2 tr(Omega Sxx^+ Omega^T). Valid for
/// any stack.
double excess_loss_trace(const WeightStack& w, const DataModel& data);

struct SpectralState {
  Vector lambdas;   // length d*
  double residual;  // max absolute deviation from the shared pattern
};

/// Reads the shared diagonal from the stack and measures how far every layer
/// is from the balanced pattern built on it.
SpectralState spectral_state(const WeightStack& w);

inline constexpr double kStructureTolerance = 1e-9;

/// 1/2 sum_{i<r} (1 - u_i^T W^{L:1} v_i)^2. Throws RegimeViolation if the
/// stack is outside the shared-structure regime.
double population_excess_loss(const WeightStack& w, const DataModel& data,
                              double structure_tolerance = kStructureTolerance);

}  // namespace hbl
