#include "hbl/errors.hpp"
#include "hbl/hessian.hpp"
#include "hbl/spectrum.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

using namespace hbl;

namespace {

Vector random_gap_lambdas(Index r, Index depth, std::mt19937_64& rng) {
  // Keep the spread inside the gap condition with some margin.
  const double l = static_cast<double>(depth);
  const double max_ratio = std::pow(l, 1.0 / (2.0 * (l - 1.0)));
  std::uniform_real_distribution<double> centre(0.4, 1.1);
  const double m = centre(rng);
  const double delta = 0.9 * m * (max_ratio - 1.0) / (max_ratio + 1.0);
  std::uniform_real_distribution<double> u(m - delta, m + delta);
  Vector v(r);
  for (Index i = 0; i < r; ++i) v[i] = u(rng);
  std::sort(v.data(), v.data() + r, std::greater<>());
  return v;
}

struct Setup {
  NetworkDims dims;
  WeightStack w;
  DataModel data;
};

Setup balanced(const std::vector<Index>& widths, const Vector& lambdas, std::uint64_t seed,
               InputSupport support = InputSupport::kDStar) {
  NetworkDims dims(widths, lambdas.size());
  Vector s = Vector::Zero(dims.d_star());
  s.head(lambdas.size()) = lambdas.array().pow(static_cast<double>(dims.depth())).matrix();
  const Index q = support_dimension(dims, support);
  WeightStack w = balanced_init(dims, s, SeededFrames{seed, q});
  DataModel data = whitened_data(dims, w.u, w.v, support);
  return {dims, w, data};
}

}  // namespace

TEST_CASE("pair_eigenvalue matches the closed form and the diagonal value") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 1.3);
  for (Index l = 2; l <= 7; ++l) {
    for (int trial = 0; trial < 20; ++trial) {
      const double a = u(rng), b = u(rng);
      CHECK(pair_eigenvalue(a, b, l) == doctest::Approx(oracle::pair_closed_form(a, b, l)).epsilon(1e-12));
      CHECK(pair_eigenvalue(a, b, l) == doctest::Approx(pair_eigenvalue(b, a, l)).epsilon(1e-14));
      CHECK(pair_eigenvalue(a, a, l) ==
            doctest::Approx(static_cast<double>(l) * std::pow(a, 2.0 * static_cast<double>(l - 1))).epsilon(1e-14));
    }
  }
}

TEST_CASE("predict_spectrum: counts and the uniform ratio") {
  const NetworkDims dims({10, 20, 20, 16}, 4);
  const SpectrumPrediction p = predict_spectrum(Vector::Constant(4, 0.7), dims);
  CHECK(p.dominant_count == 16);
  CHECK(p.bulk_count == 4 * (10 - 4) + 4 * (16 - 4));
  CHECK(p.gram_size == 160);
  CHECK(p.gram_zero_count == 160 - 16 - 72);
  CHECK(p.gap_condition_ok);
  CHECK(p.delta == 0.0);
  CHECK(p.dominant_values[0] / p.bulk_values[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(p.padded(400).size() == 400);
  CHECK((p.padded(400).tail(400 - 88).array() == 0.0).all());

  // Input support r drops the input-side bulk pairs.
  const SpectrumPrediction narrow = predict_spectrum(Vector::Constant(4, 0.7), dims, 4);
  CHECK(narrow.bulk_count == 4 * 12);

  for (Index l = 2; l <= 7; ++l) {
    const NetworkDims d = NetworkDims::uniform(l, 6, 8, 5, 3);
    const SpectrumPrediction u = predict_spectrum(Vector::Constant(3, 0.55), d);
    CHECK(u.dominant_values.maxCoeff() / u.bulk_values.maxCoeff() ==
          doctest::Approx(static_cast<double>(l)).epsilon(1e-13));
  }
}

TEST_CASE("predict_spectrum agrees with the pair-counting oracle") {
  std::mt19937_64 rng(11);
  for (Index l = 2; l <= 5; ++l) {
    const NetworkDims dims = NetworkDims::uniform(l, 7, 9, 6, 3);
    const Vector lam = random_gap_lambdas(3, l, rng);
    const Vector got = predict_spectrum(lam, dims).padded(42);
    const std::vector<double> want = oracle::predicted_multiset(lam, l, 7, 6, 6);
    REQUIRE(want.size() == 42);
    for (Index k = 0; k < 42; ++k) {
      CHECK(got[k] == doctest::Approx(want[static_cast<std::size_t>(k)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("predict_spectrum rejects bad input") {
  const NetworkDims dims({4, 6, 3}, 2);
  CHECK_THROWS_AS(predict_spectrum(Vector::Constant(4, 0.5), dims), DomainError);
  CHECK_THROWS_AS(predict_spectrum(Vector(), dims), DomainError);
  CHECK_THROWS_AS(predict_spectrum((Vector(2) << 0.5, 0.0).finished(), dims), DomainError);
  CHECK_THROWS_AS(predict_spectrum(Vector::Constant(2, 0.5), dims, 1), DomainError);
  CHECK_THROWS_AS(predict_spectrum(Vector::Constant(2, 0.5), dims, 5), DomainError);
}

TEST_CASE("gap condition") {
  const NetworkDims dims = NetworkDims::uniform(3, 6, 6, 6, 2);
  const double edge = std::pow(3.0, 1.0 / 4.0);
  CHECK(predict_spectrum((Vector(2) << 1.0, 0.99).finished(), dims).gap_condition_ok);
  CHECK_FALSE(predict_spectrum((Vector(2) << edge * 1.01, 1.0).finished(), dims).gap_condition_ok);
  // When it holds the intervals are disjoint.
  std::mt19937_64 rng(5);
  for (Index l = 2; l <= 6; ++l) {
    for (int trial = 0; trial < 20; ++trial) {
      const NetworkDims d = NetworkDims::uniform(l, 6, 6, 6, 4);
      const SpectrumPrediction p = predict_spectrum(random_gap_lambdas(4, l, rng), d);
      REQUIRE(p.gap_condition_ok);
      CHECK(p.bulk_interval().second < p.dominant_interval().first);
      CHECK(p.dominant_values.minCoeff() >= p.dominant_interval().first * (1 - 1e-12));
      CHECK(p.dominant_values.maxCoeff() <= p.dominant_interval().second * (1 + 1e-12));
      CHECK(p.bulk_values.minCoeff() >= p.bulk_interval().first * (1 - 1e-12));
      CHECK(p.bulk_values.maxCoeff() <= p.bulk_interval().second * (1 + 1e-12));
    }
  }
}

TEST_CASE("classify_clusters on the predicted multiset and under perturbation") {
  std::mt19937_64 rng(7);
  const NetworkDims dims = NetworkDims::uniform(3, 6, 8, 5, 3);
  const SpectrumPrediction p = predict_spectrum(random_gap_lambdas(3, 3, rng), dims);
  const Vector exact = p.padded(40);
  const SpectrumReport r = classify_clusters(exact, p, 0.0);
  CHECK(r.counts_match);
  CHECK(r.dominant_count == 9);
  CHECK(r.bulk_count == 3 * 2 + 3 * 2);
  CHECK(r.zero_count == 40 - 21);
  CHECK(r.prediction_deviation == 0.0);
  CHECK(r.match_error_dominant == 0.0);
  CHECK(r.match_error_bulk == 0.0);

  const double slack = 1e-3;
  std::uniform_real_distribution<double> noise(-slack / 2, slack / 2);
  Vector moved = exact;
  for (Index k = 0; k < moved.size(); ++k) moved[k] += noise(rng);
  std::sort(moved.data(), moved.data() + moved.size(), std::greater<>());
  const SpectrumReport q = classify_clusters(moved, p, slack);
  CHECK(q.counts_match);
  CHECK(q.prediction_deviation <= slack);

  const Vector unsorted = (Vector(3) << 1.0, 2.0, 0.0).finished();
  CHECK_THROWS_AS(classify_clusters(unsorted, p, 0.0), ContractViolation);
  CHECK_THROWS_AS(classify_clusters(exact, p, -1.0), DomainError);
}

TEST_CASE("kmeans labels split dominant from bulk for a uniform spectrum") {
  const NetworkDims dims = NetworkDims::uniform(4, 6, 8, 5, 3);
  const SpectrumPrediction p = predict_spectrum(Vector::Constant(3, 0.6), dims);
  const Vector exact = p.padded(30);
  const auto labels = classify_clusters_kmeans(exact, 1e-12);
  const SpectrumReport r = classify_clusters(exact, p, 0.0);
  for (std::size_t k = 0; k < labels.size(); ++k) CHECK(labels[k] == r.cluster_of[k]);
}

TEST_CASE("verify_weyl_sandwich") {
  const Vector a = (Vector(3) << 3.0, 2.0, 1.0).finished();
  CHECK(verify_weyl_sandwich(a, a, 0.0) == 0.0);
  const Vector b = (Vector(3) << 3.5, 2.0, 0.5).finished();
  CHECK(verify_weyl_sandwich(b, a, 0.5) == 0.0);
  CHECK(verify_weyl_sandwich(b, a, 0.25) == doctest::Approx(0.25));
  CHECK_THROWS_AS(verify_weyl_sandwich(a, Vector::Zero(2), 0.0), ContractViolation);

  // Random symmetric pairs: the eigenvalue shift never exceeds ||E||.
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix s = oracle::random_symmetric(12, rng);
    const Matrix e = 0.1 * oracle::random_symmetric(12, rng);
    const double norm = symmetric_spectral_norm(e);
    CHECK(verify_weyl_sandwich(sym_eigenvalues(s + e), sym_eigenvalues(s), norm * (1 + 1e-12)) == 0.0);
  }
}

TEST_CASE("verify_eigenvectors on balanced stacks") {
  std::mt19937_64 rng(23);
  for (Index l = 2; l <= 4; ++l) {
    for (InputSupport support : {InputSupport::kDStar, InputSupport::kRank}) {
      std::vector<Index> widths(static_cast<std::size_t>(l + 1), 7);
      widths.front() = 6;
      widths.back() = 5;
      const Vector lam = random_gap_lambdas(3, l, rng);
      const Setup s = balanced(widths, lam, 100 + static_cast<std::uint64_t>(l), support);
      const Matrix f = weighted_outer_factor(s.w, s.data);
      const Matrix h_o = assemble_outer(s.w, s.data);
      const double top = sym_eigenvalues(h_o).maxCoeff();
      const EigenvectorCheck c = verify_eigenvectors(s.w, s.data, f, h_o);
      CHECK(c.pairs_checked == 30);
      CHECK(c.max_residual < 1e-8 * top);
      CHECK(c.max_rayleigh_error < 1e-8);
      CHECK(c.max_zero_pair_norm < 1e-12);
    }
  }
  // Uniform start: the Rayleigh quotient of every dominant pair is L mu^{2(L-1)}.
  const Setup u = balanced({6, 8, 8, 5}, Vector::Constant(3, 0.8), 9);
  const Matrix h_o = assemble_outer(u.w, u.data);
  const Vector eig = sym_eigenvalues(h_o);
  CHECK(eig.maxCoeff() == doctest::Approx(3.0 * std::pow(0.8, 4.0)).epsilon(1e-12));
  CHECK(verify_eigenvectors(u.w, u.data, weighted_outer_factor(u.w, u.data), h_o).max_rayleigh_error < 1e-12);

  CHECK_THROWS_AS(verify_eigenvectors(u.w, u.data, Matrix::Zero(3, 3), h_o), ContractViolation);
}

TEST_CASE("measured outer spectrum equals the prediction") {
  std::mt19937_64 rng(31);
  for (Index l = 2; l <= 5; ++l) {
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<Index> widths(static_cast<std::size_t>(l + 1), 8);
      widths.front() = 7;
      widths.back() = 6;
      const Vector lam = random_gap_lambdas(4, l, rng);
      const Setup s = balanced(widths, lam, rng());
      const Vector eig = sym_eigenvalues(outer_gram(s.w, s.data));
      const SpectrumPrediction p = predict_spectrum(lam, s.dims);
      const Vector want = p.padded(eig.size());
      CHECK((eig - want).cwiseAbs().maxCoeff() <= 1e-9 * want.maxCoeff());
      const SpectrumReport r = classify_clusters(eig, p, 1e-10 * want.maxCoeff());
      CHECK(r.counts_match);
    }
  }
}

TEST_CASE("ratio_theta_L") {
  std::vector<DepthRatio> sweep;
  for (Index l = 3; l <= 5; ++l) {
    const NetworkDims dims = NetworkDims::uniform(l, 6, 8, 5, 3);
    const SpectrumPrediction p = predict_spectrum(Vector::Constant(3, 0.9), dims);
    sweep.push_back({l, classify_clusters(p.padded(30), p, 0.0)});
  }
  const RatioFit fit = ratio_theta_L(sweep);
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(fit.max_rel_dev < 1e-12);
  CHECK(fit.within_envelope);
  CHECK(fit.envelopes.size() == 3);

  sweep.pop_back();
  CHECK_THROWS_AS(ratio_theta_L(sweep), ContractViolation);
  sweep.push_back(sweep.front());
  CHECK_THROWS_AS(ratio_theta_L(sweep), ContractViolation);
}

TEST_CASE("ratio_envelope contains the dominant to bulk ratio") {
  std::mt19937_64 rng(41);
  for (Index l = 2; l <= 6; ++l) {
    const NetworkDims dims = NetworkDims::uniform(l, 6, 8, 5, 3);
    const SpectrumPrediction p = predict_spectrum(random_gap_lambdas(3, l, rng), dims);
    const SpectrumReport r = classify_clusters(p.padded(30), p, 0.0);
    const auto [lo, hi] = ratio_envelope(p, 0.0);
    CHECK(r.ratio >= lo * (1 - 1e-12));
    CHECK(r.ratio <= hi * (1 + 1e-12));
    CHECK(lo > 1.0);
  }
}
