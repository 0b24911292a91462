#pragma once

#include "hbl/matrix_kit.hpp"
#include "hbl/network.hpp"

#include <vector>

namespace hbl {

/// Position of each layer's block in the flattened parameter vector. Layers
/// are concatenated W^1 first, each vectorized row-wise.
struct ParameterLayout {
  std::vector<Index> offsets;  // offsets[k] = first index of layers[k]
  std::vector<Index> sizes;
  Index total = 0;

  static ParameterLayout of(const WeightStack& w);
  Index depth() const { return static_cast<Index>(offsets.size()); }
};

struct HessianPair {
  Matrix h_o;
  Matrix h_f;
  Matrix h_total;
  ParameterLayout layout;
};

/// A_o, the P x (d_L d_0) factor whose k-th block row is
/// kron((W^{L:k+2})^T, W^{k:1}), so that H_o = A_o B_o A_o^T.
Matrix outer_factor(const WeightStack& w);

/// A_o B_o^{1/2}, so that H_o = F F^T.
Matrix weighted_outer_factor(const WeightStack& w, const DataModel& data,
                             std::size_t max_entries = kDefaultKronCap);

/// A_o B_o A_o^T with B_o = I_{d_L} (x) sigma_xx.
Matrix assemble_outer(const WeightStack& w, const DataModel& data,
                      std::size_t max_entries = kDefaultKronCap);

/// B_o^{1/2} A_o^T A_o B_o^{1/2}. Its nonzero eigenvalues are those of H_o.
Matrix outer_gram(const WeightStack& w, const DataModel& data,
                  std::size_t max_entries = kDefaultKronCap);

/// Residual-weighted second-derivative part of the Hessian. Diagonal blocks
/// are zero; off-diagonal blocks are built from Omega and partial products.
Matrix assemble_functional(const WeightStack& w, const DataModel& data,
                           std::size_t max_entries = kDefaultKronCap);

HessianPair assemble_hessian(const WeightStack& w, const DataModel& data,
                             std::size_t max_entries = kDefaultKronCap);

inline constexpr Index kDefaultOracleCap = 600;
inline constexpr double kDefaultFdStep = 1e-4;

/// Central second differences of population_loss over the flattened
/// parameters. Independent of the analytic assembly. Throws OracleCapError
/// when P exceeds `cap`.
Matrix finite_difference_hessian(const WeightStack& w, const DataModel& data,
                                 double step = kDefaultFdStep, Index cap = kDefaultOracleCap);

/// ||Sigma^{1/L}||^{L-2} * sqrt(2 L (L-1) r) * sqrt(epsilon), reading the
/// shared spectrum from the stack.
double hf_norm_bound(const WeightStack& w, double epsilon, Index rank, Index depth);
double hf_norm_bound(double lambda_max, double epsilon, Index rank, Index depth);

/// Root-sum-square of the spectral norms of the layer blocks of `h`.
double block_norm_bound(const Matrix& h, const ParameterLayout& layout);

/// sqrt(2 r epsilon)
double omega_norm_bound(Index rank, double epsilon);

}  // namespace hbl
