#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's assembly or closed forms; inputs and outputs use plain Eigen.

#include "hbl/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using hbl::Index;
using hbl::Matrix;
using hbl::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline Matrix random_symmetric(Index n, std::mt19937_64& rng) {
  Matrix a = random_matrix(n, n, rng);
  return (a + a.transpose()) / 2.0;
}

inline Matrix random_orthogonal(Index n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n, rng));
  return qr.householderQ();
}

// Entry-by-entry definition: (i*rb + k, j*cb + l) = a(i,j) * b(k,l).
inline Matrix kron_loops(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      for (Index k = 0; k < b.rows(); ++k)
        for (Index l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

inline Vector vec_loops(const Matrix& a) {
  Vector v(a.size());
  Index k = 0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) v[k++] = a(i, j);
  return v;
}

inline Matrix product_loops(const std::vector<Matrix>& layers) {
  Matrix p = layers.front();
  for (std::size_t k = 1; k < layers.size(); ++k) p = layers[k] * p;
  return p;
}

// 1/2 E||y - P x||^2 up to the data constant, written out with traces.
inline double loss_trace(const std::vector<Matrix>& layers, const Matrix& sxx, const Matrix& syx) {
  const Matrix p = product_loops(layers);
  return 0.5 * (p * sxx * p.transpose()).trace() - (p * syx.transpose()).trace();
}

inline Vector flatten(const std::vector<Matrix>& layers) {
  Index n = 0;
  for (const Matrix& l : layers) n += l.size();
  Vector v(n);
  Index k = 0;
  for (const Matrix& l : layers) {
    const Vector part = vec_loops(l);
    v.segment(k, part.size()) = part;
    k += part.size();
  }
  return v;
}

inline std::vector<Matrix> unflatten(const Vector& v, const std::vector<Matrix>& shape) {
  std::vector<Matrix> out = shape;
  Index k = 0;
  for (Matrix& l : out)
    for (Index i = 0; i < l.rows(); ++i)
      for (Index j = 0; j < l.cols(); ++j) l(i, j) = v[k++];
  return out;
}

// Central-difference gradient of loss_trace with respect to every parameter.
inline Vector fd_gradient(const std::vector<Matrix>& layers, const Matrix& sxx, const Matrix& syx,
                          double h = 1e-5) {
  const Vector x = flatten(layers);
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (loss_trace(unflatten(xp, layers), sxx, syx) - loss_trace(unflatten(xm, layers), sxx, syx)) /
           (2.0 * h);
  }
  return g;
}

// Jacobian of vec_row(W^L ... W^1) by central differences. The map is linear
// in each single parameter, so the difference quotient is exact up to rounding.
inline Matrix fd_jacobian(const std::vector<Matrix>& layers, double h = 1e-3) {
  const Vector x = flatten(layers);
  const Index out = product_loops(layers).size();
  Matrix j(x.size(), out);
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    j.row(i) = ((vec_loops(product_loops(unflatten(xp, layers))) -
                 vec_loops(product_loops(unflatten(xm, layers)))) /
                (2.0 * h))
                   .transpose();
  }
  return j;
}

// Gauss-Newton term J (I (x) Sxx) J^T with J from differences.
inline Matrix outer_from_jacobian(const std::vector<Matrix>& layers, const Matrix& sxx) {
  const Matrix j = fd_jacobian(layers);
  const Index dl = layers.back().rows();
  return j * kron_loops(Matrix::Identity(dl, dl), sxx) * j.transpose();
}

// sum_{l=1..L} a^{2(L-l)} b^{2(l-1)} in closed form.
inline double pair_closed_form(double a, double b, Index depth) {
  const double l = static_cast<double>(depth);
  if (a == b) return l * std::pow(a, 2.0 * (l - 1.0));
  return (std::pow(a, 2.0 * l) - std::pow(b, 2.0 * l)) / (a * a - b * b);
}

// Dominant and bulk values of the outer-product spectrum, built by counting
// index pairs of the Gram operator on the singular bases.
inline std::vector<double> predicted_multiset(const Vector& lambdas, Index depth, Index d0, Index dl,
                                              Index support) {
  const Index r = lambdas.size();
  std::vector<double> out;
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j) out.push_back(pair_closed_form(lambdas[i], lambdas[j], depth));
  const double p = 2.0 * static_cast<double>(depth - 1);
  for (Index i = 0; i < r; ++i) {
    for (Index j = r; j < support; ++j) out.push_back(std::pow(lambdas[i], p));
    for (Index j = r; j < dl; ++j) out.push_back(std::pow(lambdas[i], p));
  }
  const auto total = static_cast<std::size_t>(dl * d0);
  out.resize(std::max(out.size(), total), 0.0);
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

}  // namespace oracle
