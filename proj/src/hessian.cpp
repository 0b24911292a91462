#include "hbl/hessian.hpp"

#include "hbl/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace hbl {

ParameterLayout ParameterLayout::of(const WeightStack& w) {
  ParameterLayout layout;
  for (const Matrix& layer : w.layers) {
    layout.offsets.push_back(layout.total);
    layout.sizes.push_back(layer.size());
    layout.total += layer.size();
  }
  return layout;
}

namespace {

void check_square_cap(Index p, std::size_t max_entries, const char* what) {
  const auto n = static_cast<std::size_t>(p);
  if (n != 0 && n > max_entries / n) {
    throw DimensionError(fmt::format("{}: {}x{} matrix exceeds the cap of {} entries", what, p, p,
                                     max_entries));
  }
}

// partials[k] = {W^{L:k+2}, W^{k:1}} for layer k.
struct Partials {
  std::vector<Matrix> above;
  std::vector<Matrix> below;
};

Partials partial_products(const WeightStack& w) {
  const auto n = w.layers.size();
  Partials out{std::vector<Matrix>(n), std::vector<Matrix>(n)};
  out.below[0] = Matrix::Identity(w.layers[0].cols(), w.layers[0].cols());
  for (std::size_t k = 1; k < n; ++k) out.below[k] = w.layers[k - 1] * out.below[k - 1];
  out.above[n - 1] = Matrix::Identity(w.layers[n - 1].rows(), w.layers[n - 1].rows());
  for (std::size_t k = n - 1; k-- > 0;) out.above[k] = out.above[k + 1] * w.layers[k + 1];
  return out;
}

}  // namespace

Matrix outer_factor(const WeightStack& w) {
  const ParameterLayout layout = ParameterLayout::of(w);
  const Partials partials = partial_products(w);
  const Index dl = w.layers.back().rows();
  const Index d0 = w.layers.front().cols();
  Matrix factor(layout.total, dl * d0);
  for (std::size_t k = 0; k < w.layers.size(); ++k) {
    factor.middleRows(layout.offsets[k], layout.sizes[k]) =
        kron(partials.above[k].transpose(), partials.below[k]);
  }
  return factor;
}

Matrix weighted_outer_factor(const WeightStack& w, const DataModel& data, std::size_t max_entries) {
  Matrix factor = outer_factor(w);
  const Index d0 = data.sigma_xx.rows();
  if (data.support > 0) {
    // B_o is a coordinate projector: keep columns (a, b) with b < support.
    for (Index col = 0; col < factor.cols(); ++col) {
      if (col % d0 >= data.support) factor.col(col).setZero();
    }
    return factor;
  }
  const SymEig eig = sym_eig(symmetrize(data.sigma_xx));
  const Vector root = eig.values.cwiseMax(0.0).cwiseSqrt();
  const Matrix sqrt_xx = eig.vectors * root.asDiagonal() * eig.vectors.transpose();
  const Index dl = factor.cols() / d0;
  return factor * kron(Matrix::Identity(dl, dl), sqrt_xx, max_entries);
}

Matrix assemble_outer(const WeightStack& w, const DataModel& data, std::size_t max_entries) {
  const ParameterLayout layout = ParameterLayout::of(w);
  check_square_cap(layout.total, max_entries, "assemble_outer");
  const Matrix factor = weighted_outer_factor(w, data, max_entries);
  Matrix h = factor * factor.transpose();
  return symmetrize(h);
}

Matrix outer_gram(const WeightStack& w, const DataModel& data, std::size_t max_entries) {
  const Matrix factor = weighted_outer_factor(w, data, max_entries);
  Matrix g = factor.transpose() * factor;
  return symmetrize(g);
}

Matrix assemble_functional(const WeightStack& w, const DataModel& data, std::size_t max_entries) {
  const ParameterLayout layout = ParameterLayout::of(w);
  check_square_cap(layout.total, max_entries, "assemble_functional");
  const Partials partials = partial_products(w);
  const Matrix omega = residual(w, data);
  const auto n = w.layers.size();

  Matrix h = Matrix::Zero(layout.total, layout.total);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = k + 1; l < n; ++l) {
      // Mixed second derivative of tr(d^2 P Omega^T) for a perturbation E_k of
      // layer k and E_l of layer l:
      //   tr(above_l E_l between E_k below_k Omega^T)
      // giving entry [(a,b),(c,d)] = between(b,c) * coupling(d,a). This is
      // kron(coupling^T, between) with the column pair (c,d) commuted.
      const Matrix between = chain_product(w, static_cast<Index>(k) + 1, static_cast<Index>(l));
      const Matrix coupling = partials.below[k] * omega.transpose() * partials.above[l];
      const Index rows_l = w.layers[l].rows();
      const Index cols_l = w.layers[l].cols();
      const Index rows_k = w.layers[k].rows();
      const Index cols_k = w.layers[k].cols();
      const Index off_l = layout.offsets[l];
      const Index off_k = layout.offsets[k];
      for (Index a = 0; a < rows_l; ++a) {
        for (Index b = 0; b < cols_l; ++b) {
          const Index row = off_l + a * cols_l + b;
          for (Index c = 0; c < rows_k; ++c) {
            const double bc = between(b, c);
            if (bc == 0.0) continue;
            for (Index d = 0; d < cols_k; ++d) {
              h(row, off_k + c * cols_k + d) = bc * coupling(d, a);
            }
          }
        }
      }
      h.block(off_k, off_l, layout.sizes[k], layout.sizes[l]) =
          h.block(off_l, off_k, layout.sizes[l], layout.sizes[k]).transpose();
    }
  }
  return h;
}

HessianPair assemble_hessian(const WeightStack& w, const DataModel& data, std::size_t max_entries) {
  HessianPair pair;
  pair.layout = ParameterLayout::of(w);
  pair.h_o = assemble_outer(w, data, max_entries);
  pair.h_f = assemble_functional(w, data, max_entries);
  pair.h_total = pair.h_o + pair.h_f;
  require_finite(pair.h_total, "assembled Hessian");
  return pair;
}

Matrix finite_difference_hessian(const WeightStack& w, const DataModel& data, double step,
                                 Index cap) {
  if (!(step > 0.0)) throw DomainError("finite-difference step must be positive");
  const ParameterLayout layout = ParameterLayout::of(w);
  const Index p = layout.total;
  if (p > cap) {
    throw OracleCapError(fmt::format(
        "finite-difference oracle needs O(P^2) loss evaluations; P = {} exceeds the cap of {}", p, cap));
  }
  // Locate a flat index inside the stack.
  std::vector<std::pair<std::size_t, Index>> where(static_cast<std::size_t>(p));
  for (std::size_t k = 0; k < w.layers.size(); ++k) {
    for (Index j = 0; j < layout.sizes[k]; ++j) {
      where[static_cast<std::size_t>(layout.offsets[k] + j)] = {k, j};
    }
  }
  WeightStack work = w;
  auto entry = [&](Index flat) -> double& {
    const auto& [k, j] = where[static_cast<std::size_t>(flat)];
    return work.layers[k].data()[j];
  };
  auto shifted_loss = [&](Index i, double di, Index j, double dj) {
    double& xi = entry(i);
    const double saved_i = xi;
    xi += di;
    double& xj = entry(j);
    const double saved_j = xj;
    xj += dj;
    const double value = population_loss(work, data);
    entry(j) = saved_j;
    entry(i) = saved_i;
    return value;
  };

  Matrix h(p, p);
  const double denom = 4.0 * step * step;
  for (Index i = 0; i < p; ++i) {
    for (Index j = i; j < p; ++j) {
      const double value = (shifted_loss(i, step, j, step) - shifted_loss(i, step, j, -step) -
                            shifted_loss(i, -step, j, step) + shifted_loss(i, -step, j, -step)) /
                           denom;
      h(i, j) = value;
      h(j, i) = value;
    }
  }
  return h;
}

double hf_norm_bound(double lambda_max, double epsilon, Index rank, Index depth) {
  const auto l = static_cast<double>(depth);
  return std::pow(lambda_max, l - 2.0) * std::sqrt(2.0 * l * (l - 1.0) * static_cast<double>(rank)) *
         std::sqrt(std::max(epsilon, 0.0));
}

double hf_norm_bound(const WeightStack& w, double epsilon, Index rank, Index depth) {
  const SpectralState state = spectral_state(w);
  const double lambda_max = state.lambdas.size() == 0 ? 0.0 : state.lambdas.cwiseAbs().maxCoeff();
  return hf_norm_bound(lambda_max, epsilon, rank, depth);
}

double block_norm_bound(const Matrix& h, const ParameterLayout& layout) {
  double total = 0.0;
  for (std::size_t k = 0; k < layout.offsets.size(); ++k) {
    for (std::size_t l = 0; l < layout.offsets.size(); ++l) {
      const Matrix block = h.block(layout.offsets[k], layout.offsets[l], layout.sizes[k], layout.sizes[l]);
      if (block.isZero(0.0)) continue;
      const double norm = spectral_norm(block);
      total += norm * norm;
    }
  }
  return std::sqrt(total);
}

double omega_norm_bound(Index rank, double epsilon) {
  return std::sqrt(2.0 * static_cast<double>(rank) * std::max(epsilon, 0.0));
}

}  // namespace hbl
