#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace hbl {

// Row-major so that vec_row is a plain reinterpretation of storage and the
// identity vec_row(A W B) = kron(A, B^T) vec_row(W) needs no permutation.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr std::size_t kDefaultKronCap = 10'000'000;

/// Throws NumericalFailure if any entry is NaN or infinite.
void require_finite(const Matrix& a, const char* what);
void require_finite(const Vector& v, const char* what);

/// Kronecker product. Block (i, j) of the result is a(i, j) * b.
/// Throws DimensionError when the result would hold more than `max_entries`.
Matrix kron(const Matrix& a, const Matrix& b, std::size_t max_entries = kDefaultKronCap);

/// Row-wise vectorization: the rows of `a` concatenated.
Vector vec_row(const Matrix& a);
Matrix unvec_row(const Vector& v, Index rows, Index cols);

/// Embeds `b` in the top-left corner of a rows x cols zero matrix.
Matrix pad_embed(const Matrix& b, Index rows, Index cols);

/// Identity of size n embedded top-left in a rows x cols zero matrix.
Matrix padded_identity(Index n, Index rows, Index cols);

struct Svd {
  Matrix u;      // rows x k, orthonormal columns
  Vector sigma;  // k = min(rows, cols), descending, nonnegative
  Matrix v;      // cols x k, orthonormal columns
};

/// Thin SVD with a = u * diag(sigma) * v^T.
Svd svd(const Matrix& a);

struct SymEig {
  Vector values;   // descending
  Matrix vectors;  // column k pairs with values[k]
};

/// Eigendecomposition of a symmetric matrix. The caller symmetrizes first;
/// an input whose max-entry asymmetry exceeds 1e-8 * max|s| is rejected.
SymEig sym_eig(const Matrix& s);

/// Eigenvalues only, descending. Same symmetry contract as sym_eig.
Vector sym_eigenvalues(const Matrix& s);

/// (s + s^T) / 2
Matrix symmetrize(const Matrix& s);

/// Largest singular value.
double spectral_norm(const Matrix& a);

/// Spectral norm of a symmetric matrix via its eigenvalues.
double symmetric_spectral_norm(const Matrix& s);

double max_abs(const Matrix& a);

/// Orthonormal basis of R^n whose first k columns are the columns of
/// `frame` (assumed orthonormal). The completion is deterministic.
Matrix complete_basis(const Matrix& frame);

}  // namespace hbl
