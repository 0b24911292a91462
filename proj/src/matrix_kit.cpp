#include "hbl/matrix_kit.hpp"

#include "hbl/errors.hpp"

#include <Eigen/SVD>
#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hbl {

void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw NumericalFailure(fmt::format("{}: non-finite entry", what));
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericalFailure(fmt::format("{}: non-finite entry", what));
}

Matrix kron(const Matrix& a, const Matrix& b, std::size_t max_entries) {
  const auto rows = static_cast<std::size_t>(a.rows()) * static_cast<std::size_t>(b.rows());
  const auto cols = static_cast<std::size_t>(a.cols()) * static_cast<std::size_t>(b.cols());
  if (cols != 0 && rows > max_entries / cols) {
    throw DimensionError(fmt::format("kron: {}x{} result exceeds the cap of {} entries", rows,
                                     cols, max_entries));
  }
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Vector vec_row(const Matrix& a) {
  return Eigen::Map<const Vector>(a.data(), a.size());
}

Matrix unvec_row(const Vector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) {
    throw DimensionError(
        fmt::format("unvec_row: length {} does not match {}x{}", v.size(), rows, cols));
  }
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Matrix pad_embed(const Matrix& b, Index rows, Index cols) {
  if (rows < b.rows() || cols < b.cols()) {
    throw DimensionError(fmt::format("pad_embed: target {}x{} is smaller than source {}x{}", rows,
                                     cols, b.rows(), b.cols()));
  }
  Matrix out = Matrix::Zero(rows, cols);
  out.topLeftCorner(b.rows(), b.cols()) = b;
  return out;
}

Matrix padded_identity(Index n, Index rows, Index cols) {
  return pad_embed(Matrix::Identity(n, n), rows, cols);
}

Svd svd(const Matrix& a) {
  require_finite(a, "svd input");
  Eigen::JacobiSVD<Eigen::MatrixXd> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) throw NumericalFailure("svd: decomposition did not converge");
  Svd out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
  require_finite(out.sigma, "svd singular values");
  return out;
}

Matrix symmetrize(const Matrix& s) {
  Matrix out = 0.5 * (s + s.transpose());
  return out;
}

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

namespace {

void require_symmetric(const Matrix& s) {
  if (s.rows() != s.cols()) {
    throw ContractViolation(fmt::format("sym_eig: matrix is {}x{}, not square", s.rows(), s.cols()));
  }
  require_finite(s, "sym_eig input");
  const double scale = max_abs(s);
  const double asym = max_abs(s - s.transpose());
  if (asym > 1e-8 * scale) {
    throw ContractViolation(
        fmt::format("sym_eig: asymmetry {:.3e} exceeds 1e-8 * max|s| = {:.3e}", asym, 1e-8 * scale));
  }
}

}  // namespace

SymEig sym_eig(const Matrix& s) {
  require_symmetric(s);
  const Index n = s.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
  if (solver.info() != Eigen::Success) throw NumericalFailure("sym_eig: solver did not converge");
  // Eigen returns ascending order.
  SymEig out{Vector(n), Matrix(n, n)};
  for (Index k = 0; k < n; ++k) {
    out.values[k] = solver.eigenvalues()[n - 1 - k];
    out.vectors.col(k) = solver.eigenvectors().col(n - 1 - k);
  }
  return out;
}

Vector sym_eigenvalues(const Matrix& s) {
  require_symmetric(s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalFailure("sym_eig: solver did not converge");
  return solver.eigenvalues().reverse();
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  require_finite(a, "spectral_norm input");
  Eigen::BDCSVD<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw NumericalFailure("spectral_norm: SVD did not converge");
  return solver.singularValues()[0];
}

double symmetric_spectral_norm(const Matrix& s) {
  if (s.size() == 0) return 0.0;
  const Vector values = sym_eigenvalues(s);
  return std::max(std::abs(values[0]), std::abs(values[values.size() - 1]));
}

Matrix complete_basis(const Matrix& frame) {
  const Index n = frame.rows();
  const Index k = frame.cols();
  Matrix out(n, n);
  out.leftCols(k) = frame;
  if (k == n) return out;
  if (k == 0) {
    out.setIdentity();
    return out;
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(frame);
  Eigen::MatrixXd q = qr.householderQ();
  out.rightCols(n - k) = q.rightCols(n - k);
  return out;
}

}  // namespace hbl
