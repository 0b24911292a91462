#include "hbl/network.hpp"

#include "hbl/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace hbl {

NetworkDims::NetworkDims(std::vector<Index> widths, Index rank)
    : widths_(std::move(widths)), rank_(rank) {
  if (widths_.size() < 3) {
    throw ConfigError(fmt::format("depth must be at least 2, got {}", widths_.size() - 1));
  }
  for (Index w : widths_) {
    if (w < 1) throw ConfigError(fmt::format("layer widths must be positive, got {}", w));
  }
  const Index ds = d_star();
  for (std::size_t l = 1; l + 1 < widths_.size(); ++l) {
    if (widths_[l] < ds) {
      throw ConfigError(fmt::format(
          "width condition violated: hidden width d_{} = {} is below d* = min(d_0, d_L) = {}", l,
          widths_[l], ds));
    }
  }
  if (rank_ < 1 || rank_ > ds) {
    throw ConfigError(fmt::format("effective rank r = {} must satisfy 1 <= r <= d* = {}", rank_, ds));
  }
}

NetworkDims NetworkDims::uniform(Index depth, Index input, Index hidden, Index output, Index rank) {
  if (depth < 2) throw ConfigError(fmt::format("depth must be at least 2, got {}", depth));
  std::vector<Index> widths(static_cast<std::size_t>(depth + 1), hidden);
  widths.front() = input;
  widths.back() = output;
  return NetworkDims(std::move(widths), rank);
}

Index NetworkDims::parameter_count() const {
  Index total = 0;
  for (std::size_t l = 1; l < widths_.size(); ++l) total += widths_[l] * widths_[l - 1];
  return total;
}

Index support_dimension(const NetworkDims& dims, InputSupport support) {
  return support == InputSupport::kDStar ? dims.d_star() : dims.rank();
}

DataModel whitened_data(const NetworkDims& dims, const Matrix& u, const Matrix& v,
                        InputSupport support) {
  const Index q = support_dimension(dims, support);
  const Index ds = dims.d_star();
  DataModel data;
  data.sigma_xx = padded_identity(q, dims.input(), dims.input());
  data.sigma_yx = u * padded_identity(dims.rank(), ds, ds) * v.transpose();
  data.rank = dims.rank();
  data.support = q;
  return data;
}

DataModel sampled_data(const NetworkDims& dims, const Matrix& u, const Matrix& v,
                       InputSupport support, Index samples, std::uint64_t seed) {
  if (samples < 1) throw ConfigError("sampled data needs at least one sample");
  const Index q = support_dimension(dims, support);
  const DataModel population = whitened_data(dims, u, v, support);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x = Matrix::Zero(dims.input(), samples);
  for (Index i = 0; i < q; ++i) {
    for (Index n = 0; n < samples; ++n) x(i, n) = normal(rng);
  }
  const Matrix y = population.sigma_yx * x;
  DataModel data;
  data.sigma_xx = symmetrize(x * x.transpose() / static_cast<double>(samples));
  data.sigma_yx = y * x.transpose() / static_cast<double>(samples);
  data.rank = dims.rank();
  data.support = 0;
  return data;
}

ExplicitFrames sample_frames(const NetworkDims& dims, const SeededFrames& source) {
  const Index support = source.support == 0 ? dims.d_star() : source.support;
  if (support < dims.rank() || support > dims.input()) {
    throw ConfigError(fmt::format("frame support {} must lie in [r, d_0] = [{}, {}]", support,
                                  dims.rank(), dims.input()));
  }
  std::mt19937_64 rng(source.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a = Matrix::Zero(dims.output(), dims.input());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      const double draw = normal(rng);
      if (j < support) a(i, j) = draw;
    }
  }
  Svd decomposition = svd(a);
  return {std::move(decomposition.u), std::move(decomposition.v)};
}

namespace {

void check_frames(const NetworkDims& dims, const Matrix& u, const Matrix& v) {
  const Index ds = dims.d_star();
  if (u.rows() != dims.output() || u.cols() != ds || v.rows() != dims.input() || v.cols() != ds) {
    throw ConfigError(fmt::format("frames must be {}x{} and {}x{}, got {}x{} and {}x{}",
                                  dims.output(), ds, dims.input(), ds, u.rows(), u.cols(), v.rows(),
                                  v.cols()));
  }
  const Matrix eye = Matrix::Identity(ds, ds);
  const double du = max_abs(u.transpose() * u - eye);
  const double dv = max_abs(v.transpose() * v - eye);
  if (du > 1e-10 || dv > 1e-10) {
    throw ConfigError(
        fmt::format("frames are not orthonormal (|U^T U - I| = {:.2e}, |V^T V - I| = {:.2e})", du, dv));
  }
}

}  // namespace

WeightStack balanced_init(const NetworkDims& dims, const Vector& singular_values,
                          const FrameSource& frames, BalancedInitOptions options) {
  const Index ds = dims.d_star();
  const Index depth = dims.depth();
  if (singular_values.size() != ds) {
    throw DomainError(fmt::format("expected {} singular values (d*), got {}", ds,
                                  singular_values.size()));
  }
  require_finite(singular_values, "balanced_init singular values");
  for (Index i = 0; i < ds; ++i) {
    if (singular_values[i] < 0.0) {
      throw DomainError(fmt::format("singular value {} is negative ({})", i, singular_values[i]));
    }
    if (i > 0 && singular_values[i] > singular_values[i - 1]) {
      throw DomainError("singular values must be sorted in descending order");
    }
  }
  if (!options.allow_nonzero_tail) {
    for (Index i = dims.rank(); i < ds; ++i) {
      if (singular_values[i] != 0.0) {
        throw DomainError(fmt::format(
            "singular value {} beyond the effective rank must be zero, got {}", i, singular_values[i]));
      }
    }
  }

  ExplicitFrames resolved = std::holds_alternative<ExplicitFrames>(frames)
                                ? std::get<ExplicitFrames>(frames)
                                : sample_frames(dims, std::get<SeededFrames>(frames));
  check_frames(dims, resolved.u, resolved.v);

  Vector root(ds);
  for (Index i = 0; i < ds; ++i) {
    root[i] = std::pow(singular_values[i], 1.0 / static_cast<double>(depth));
  }
  const Matrix s = root.asDiagonal();

  WeightStack w;
  w.layers.reserve(static_cast<std::size_t>(depth));
  for (Index l = 1; l <= depth; ++l) {
    const Index rows = dims.width(l);
    const Index cols = dims.width(l - 1);
    if (l == 1) {
      w.layers.push_back(pad_embed(s * resolved.v.transpose(), rows, cols));
    } else if (l == depth) {
      w.layers.push_back(pad_embed(resolved.u * s, rows, cols));
    } else {
      w.layers.push_back(pad_embed(s, rows, cols));
    }
  }
  w.u = std::move(resolved.u);
  w.v = std::move(resolved.v);
  return w;
}

Matrix chain_product(const WeightStack& w, Index lo, Index hi) {
  const Index depth = w.depth();
  if (lo < 0 || hi > depth || lo > hi) {
    throw ContractViolation(fmt::format("chain_product: bad range [{}, {}) for depth {}", lo, hi, depth));
  }
  const Index base = lo < depth ? w.layers[static_cast<std::size_t>(lo)].cols()
                                : w.layers.back().rows();
  Matrix out = Matrix::Identity(base, base);
  for (Index k = lo; k < hi; ++k) out = w.layers[static_cast<std::size_t>(k)] * out;
  return out;
}

Matrix end_to_end(const WeightStack& w) { return chain_product(w, 0, w.depth()); }

Matrix residual(const WeightStack& w, const DataModel& data) {
  return end_to_end(w) * data.sigma_xx - data.sigma_yx;
}

Matrix population_gradient(const WeightStack& w, const DataModel& data, Index layer) {
  const Index depth = w.depth();
  if (layer < 0 || layer >= depth) {
    throw ContractViolation(fmt::format("layer index {} outside [0, {})", layer, depth));
  }
  const Matrix omega = residual(w, data);
  return chain_product(w, layer + 1, depth).transpose() * omega *
         chain_product(w, 0, layer).transpose();
}

WeightStack gd_step(const WeightStack& w, const DataModel& data, double eta) {
  const Index depth = w.depth();
  const auto n = static_cast<std::size_t>(depth);
  // below[k] = W^{k:1}, above[k] = W^{L:k+2}, both for layer k.
  std::vector<Matrix> below(n);
  std::vector<Matrix> above(n);
  below[0] = Matrix::Identity(w.layers[0].cols(), w.layers[0].cols());
  for (std::size_t k = 1; k < n; ++k) below[k] = w.layers[k - 1] * below[k - 1];
  above[n - 1] = Matrix::Identity(w.layers[n - 1].rows(), w.layers[n - 1].rows());
  for (std::size_t k = n - 1; k-- > 0;) above[k] = above[k + 1] * w.layers[k + 1];

  const Matrix product = w.layers[n - 1] * below[n - 1];
  const Matrix omega = product * data.sigma_xx - data.sigma_yx;

  WeightStack next;
  next.layers.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    next.layers.push_back(w.layers[k] - eta * (above[k].transpose() * omega * below[k].transpose()));
  }
  next.u = w.u;
  next.v = w.v;
  return next;
}

double population_loss(const WeightStack& w, const DataModel& data) {
  const Matrix p = end_to_end(w);
  return 0.5 * (p * data.sigma_xx * p.transpose()).trace() -
         (p * data.sigma_yx.transpose()).trace();
}

double excess_loss_trace(const WeightStack& w, const DataModel& data) {
  const Matrix omega = residual(w, data);
  if (data.support > 0) {
    // sigma_xx is a projector onto its support, so sigma_xx^+ = sigma_xx and
    // Omega already vanishes outside it.
    return 0.5 * omega.squaredNorm();
  }
  const SymEig eig = sym_eig(symmetrize(data.sigma_xx));
  const double cutoff = 1e-12 * std::max(1.0, std::abs(eig.values[0]));
  Vector inv = Vector::Zero(eig.values.size());
  for (Index k = 0; k < inv.size(); ++k) {
    if (eig.values[k] > cutoff) inv[k] = 1.0 / eig.values[k];
  }
  const Matrix pinv = eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (omega * pinv * omega.transpose()).trace();
}

SpectralState spectral_state(const WeightStack& w) {
  const Index depth = w.depth();
  const Index ds = w.u.cols();
  Vector lambdas(ds);
  if (depth >= 3) {
    lambdas = w.layers[1].diagonal().head(ds);
  } else {
    const Matrix projected = w.u.transpose() * w.layers.back();
    lambdas = projected.diagonal().head(ds);
  }
  const Matrix s = lambdas.asDiagonal();
  double worst = 0.0;
  for (Index k = 0; k < depth; ++k) {
    const Matrix& layer = w.layers[static_cast<std::size_t>(k)];
    Matrix expected;
    if (k == 0) {
      expected = pad_embed(s * w.v.transpose(), layer.rows(), layer.cols());
    } else if (k == depth - 1) {
      expected = pad_embed(w.u * s, layer.rows(), layer.cols());
    } else {
      expected = pad_embed(s, layer.rows(), layer.cols());
    }
    worst = std::max(worst, max_abs(layer - expected));
  }
  return {std::move(lambdas), worst};
}

double population_excess_loss(const WeightStack& w, const DataModel& data,
                              double structure_tolerance) {
  const SpectralState state = spectral_state(w);
  if (!(state.residual <= structure_tolerance)) {
    throw RegimeViolation(fmt::format(
        "stack is outside the shared-structure regime (residual {:.3e} > {:.1e})", state.residual,
        structure_tolerance));
  }
  const Matrix p = end_to_end(w);
  double total = 0.0;
  for (Index i = 0; i < data.rank; ++i) {
    const double sigma = w.u.col(i).dot(p * w.v.col(i));
    total += (1.0 - sigma) * (1.0 - sigma);
  }
  return 0.5 * total;
}

}  // namespace hbl
