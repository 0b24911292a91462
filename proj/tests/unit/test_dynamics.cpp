#include "hbl/dynamics.hpp"
#include "hbl/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace hbl;

TEST_CASE("lambda_step fixed points and the hand value") {
  for (Index l = 2; l <= 7; ++l) {
    for (double eta : {0.01, 0.1, 0.3}) {
      CHECK(lambda_step(1.0, eta, l) == 1.0);
      CHECK(lambda_step(0.0, eta, l) == 0.0);
    }
  }
  // 0.5 - 0.1 * 0.125 + 0.1 * 0.5
  CHECK(lambda_step(0.5, 0.1, 2) == doctest::Approx(0.5375).epsilon(1e-15));
  CHECK(lambda_step(0.5, 0.2, 3) == doctest::Approx(0.5 - 0.2 * std::pow(0.5, 5) + 0.2 * 0.25).epsilon(1e-15));
}

TEST_CASE("max_step_size") {
  CHECK(max_step_size(2, 1.0) == doctest::Approx(0.5));
  CHECK(max_step_size(3, 1.0) == doctest::Approx(1.0 / 3.0));
  // M large enough that the second term binds.
  CHECK(max_step_size(2, 2.0) == doctest::Approx(2.0 / (3.0 * 4.0)));
  CHECK(bound_m((Vector(3) << 0.2, 0.7, 0.4).finished()) == 1.0);
  CHECK(bound_m((Vector(2) << 1.3, 0.4).finished()) == doctest::Approx(1.3));
}

TEST_CASE("recursion converges from any start in (0, M] below the step bound") {
  // Small starts at large depth need tens of millions of steps, hence the cap.
  for (Index l = 2; l <= 7; ++l) {
    for (double m : {1.0, 1.2}) {
      const double eta = 0.9 * max_step_size(l, m);
      for (double start : {0.05, 0.1, 0.5, 0.95, m}) {
        CAPTURE(l);
        CAPTURE(m);
        CAPTURE(start);
        double x = start;
        bool bounded = true;
        bool monotone = true;
        for (Index t = 0; t < 100'000'000 && std::abs(x - 1.0) >= 1e-10; ++t) {
          const double next = lambda_step(x, eta, l);
          bounded = bounded && next > 0.0 && next <= m;
          monotone = monotone && (x > 1.0 || next >= x) && (x < 1.0 || next <= x);
          x = next;
        }
        CHECK(bounded);
        CHECK(monotone);
        CHECK(std::abs(x - 1.0) < 1e-10);
      }
    }
  }
}

TEST_CASE("run_scalar_dynamics reports") {
  const ScalarRun flat = run_scalar_dynamics(Vector::Ones(3), 0.2, 3, 10);
  REQUIRE(flat.report.converged_at);
  CHECK(*flat.report.converged_at == 0);
  CHECK(flat.report.alpha == 1.0);
  CHECK(flat.trajectory.values.size() == 11);

  const ScalarRun half = run_scalar_dynamics(Vector::Constant(4, 0.5), 0.4, 2, 200);
  for (std::size_t t = 1; t < half.trajectory.values.size(); ++t) {
    CHECK((half.trajectory.values[t] - half.trajectory.values[t - 1]).minCoeff() >= 0.0);
  }
  REQUIRE(half.report.converged_at);
  CHECK(half.report.alpha > 0.0);
  CHECK(half.report.alpha <= 1.0);
  CHECK(half.report.c_min == doctest::Approx(0.5));
  CHECK(half.report.window_start == 20);
  CHECK(half.report.predicted_decay_rate == doctest::Approx(2.0 * 2.0 * half.report.alpha * 0.4));
  CHECK(window_alpha(half.trajectory, 0, 200) == doctest::Approx(0.25));
}

TEST_CASE("run_scalar_dynamics rejects bad step sizes and starts") {
  CHECK_THROWS_AS(run_scalar_dynamics(Vector::Constant(2, 0.5), 0.5, 2, 10), ConfigError);
  CHECK_THROWS_AS(run_scalar_dynamics(Vector::Constant(2, 0.5), 0.0, 2, 10), ConfigError);
  CHECK_THROWS_AS(run_scalar_dynamics((Vector(2) << 0.5, 0.0).finished(), 0.1, 2, 10), ConfigError);
  CHECK_THROWS_AS(run_scalar_dynamics(Vector::Constant(2, 0.5), 0.1, 2, -1), ConfigError);
}

TEST_CASE("closed_form_excess_loss") {
  CHECK(closed_form_excess_loss(Vector::Ones(5), 3) == 0.0);
  CHECK(closed_form_excess_loss(Vector::Zero(4), 3) == doctest::Approx(2.0));
}

TEST_CASE("loss_decay_bound") {
  CHECK(loss_decay_bound(1.5, 0.3, 0.1, 3, 0.0) == 1.5);
  CHECK(loss_decay_bound(1.0, 0.3, 0.1, 2, 10.0) ==
        doctest::Approx(loss_decay_bound(1.0, 0.3, 0.1, 4, 5.0)).epsilon(1e-15));
}

TEST_CASE("per-step contraction and the exponential loss bound") {
  for (Index l = 2; l <= 6; ++l) {
    const double eta = 0.9 * max_step_size(l, 1.0);
    const Vector start = (Vector(4) << 0.9, 0.6, 0.3, 0.1).finished();
    const Index steps = 4000;
    const ScalarRun run = run_scalar_dynamics(start, eta, l, steps);
    const auto& v = run.trajectory.values;
    const double p = 2.0 * static_cast<double>(l) - 2.0;
    double worst = -1.0;
    for (std::size_t t = 0; t + 1 < v.size(); ++t) {
      for (Index i = 0; i < 4; ++i) {
        const double now = 1.0 - std::pow(v[t][i], static_cast<double>(l));
        const double next = 1.0 - std::pow(v[t + 1][i], static_cast<double>(l));
        const double factor = std::exp(-2.0 * static_cast<double>(l) * eta * std::pow(v[t][i], p));
        worst = std::max(worst, next * next - factor * now * now - 1e-30);
      }
    }
    CHECK(worst <= 0.0);
    // Whole-run alpha makes the bound hold from the first step.
    const double alpha = window_alpha(run.trajectory, 0, steps);
    const double l0 = closed_form_excess_loss(start, l);
    double excess = -1.0;
    for (std::size_t t = 0; t < v.size(); ++t) {
      const double loss = closed_form_excess_loss(v[t], l);
      excess = std::max(excess, loss - loss_decay_bound(l0, alpha, eta, l, static_cast<double>(t)) - 1e-28);
    }
    CHECK(excess <= 0.0);
  }
}

TEST_CASE("1e5 iterations at 0.9 of the bound reach 1 from 0.1, 0.5 and M for L up to 6") {
  // At L = 7 a start of 0.1 needs about 1.6e5 (M = 1) to 1.3e6 (M = 1.2) steps.
  for (Index l = 2; l <= 6; ++l) {
    for (double m : {1.0, 1.2}) {
      const double eta = 0.9 * max_step_size(l, m);
      for (double start : {0.1, 0.5, m}) {
        double x = start;
        for (int t = 0; t < 100'000; ++t) x = lambda_step(x, eta, l);
        CAPTURE(l);
        CAPTURE(m);
        CAPTURE(start);
        CHECK(std::abs(x - 1.0) < 1e-10);
      }
    }
  }
}
