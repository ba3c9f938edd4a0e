#include <cmath>
#include <complex>

#include <doctest.h>

#include "cbflow/ode.hpp"

using namespace cbflow;

namespace {
const double kPi = std::acos(-1.0);
}

TEST_CASE("scalar exponential decay") {
  auto rhs = [](double, const ComplexVec& y, ComplexVec& dy) { dy[0] = -y[0]; };
  ode::Options opt;
  opt.rel_tol = 1e-10;
  opt.abs_tol = 1e-12;
  const auto sol = ode::solve(rhs, {Complex(1.0, 0.0)}, {0.0, 0.5, 1.0, 2.0}, opt);
  REQUIRE_FALSE(sol.failure.has_value());
  REQUIRE(sol.y.size() == 4);
  CHECK(std::abs(sol.y[1][0].real() - std::exp(-0.5)) < 1e-9);
  CHECK(std::abs(sol.y[2][0].real() - std::exp(-1.0)) < 1e-9);
  CHECK(std::abs(sol.y[3][0].real() - std::exp(-2.0)) < 1e-9);
  CHECK(sol.stats.accepted > 0);
  CHECK(sol.stats.rhs_calls >= 6 * sol.stats.accepted);
}

TEST_CASE("complex rotation returns to the start") {
  auto rhs = [](double, const ComplexVec& y, ComplexVec& dy) {
    dy[0] = Complex(0.0, 1.0) * y[0];
  };
  ode::Options opt;
  opt.rel_tol = 1e-11;
  opt.abs_tol = 1e-13;
  const auto sol =
      ode::solve(rhs, {Complex(1.0, 0.0)}, {0.0, kPi, 2.0 * kPi}, opt);
  REQUIRE_FALSE(sol.failure.has_value());
  CHECK(std::abs(sol.y[1][0] - Complex(-1.0, 0.0)) < 1e-8);
  CHECK(std::abs(sol.y[2][0] - Complex(1.0, 0.0)) < 1e-8);
}

TEST_CASE("coupled linear system matches the matrix exponential") {
  // y' = B y with B = [[-1, 0.5], [0.3, -2]], y(0) = (-1, -1); reference
  // values computed from expm(tB) in extended precision.
  auto rhs = [](double, const ComplexVec& y, ComplexVec& dy) {
    dy[0] = -1.0 * y[0] + 0.5 * y[1];
    dy[1] = 0.3 * y[0] - 2.0 * y[1];
  };
  ode::Options opt;
  opt.rel_tol = 1e-11;
  opt.abs_tol = 1e-13;
  const auto sol = ode::solve(rhs, {Complex(-1.0, 0.0), Complex(-1.0, 0.0)},
                              {0.0, 0.5, 1.0}, opt);
  REQUIRE_FALSE(sol.failure.has_value());
  CHECK(sol.y[1][0].real() == doctest::Approx(-0.7363217501891636).epsilon(1e-9));
  CHECK(sol.y[1][1].real() == doctest::Approx(-0.44815447837722033).epsilon(1e-9));
  CHECK(sol.y[2][0].real() == doctest::Approx(-0.5075695629084921).epsilon(1e-9));
  CHECK(sol.y[2][1].real() == doctest::Approx(-0.22160253062544347).epsilon(1e-9));
}

TEST_CASE("solver lands on grid points exactly") {
  auto rhs = [](double t, const ComplexVec&, ComplexVec& dy) {
    dy[0] = Complex(std::cos(t), 0.0);
  };
  const std::vector<double> grid{0.0, 0.3, 0.7, 1.0};
  const auto sol = ode::solve(rhs, {Complex(0.0, 0.0)}, grid);
  REQUIRE(sol.t.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(sol.t[i] == grid[i]);
  CHECK(std::abs(sol.y[3][0].real() - std::sin(1.0)) < 1e-8);
}

TEST_CASE("grid validation") {
  auto rhs = [](double, const ComplexVec& y, ComplexVec& dy) { dy[0] = y[0]; };
  CHECK_THROWS_AS(ode::solve(rhs, {Complex(1.0, 0.0)}, {}), std::invalid_argument);
  CHECK_THROWS_AS(ode::solve(rhs, {Complex(1.0, 0.0)}, {0.0, 0.0}),
                  std::invalid_argument);
  const auto sol = ode::solve(rhs, {Complex(1.0, 0.0)}, {3.0});
  CHECK(sol.y.size() == 1);
  CHECK(sol.t[0] == 3.0);
}

TEST_CASE("post-accept hook can abort the run") {
  auto rhs = [](double, const ComplexVec&, ComplexVec& dy) {
    dy[0] = Complex(1.0, 0.0);
  };
  auto hook = [](double t, ComplexVec& y) {
    ode::HookResult hr;
    if (y[0].real() > 1e-12) {
      hr.failure = ode::Failure{ode::FailureKind::DomainEscape, t,
                                "state left the closed left half-plane"};
    }
    return hr;
  };
  const auto sol = ode::solve(rhs, {Complex(-0.5, 0.0)},
                              {0.0, 0.25, 0.5, 0.75, 1.0}, {}, hook);
  REQUIRE(sol.failure.has_value());
  CHECK(sol.failure->kind == ode::FailureKind::DomainEscape);
  CHECK(sol.failure->time > 0.5 - 1e-9);
  CHECK(sol.t.back() <= 0.5);
}

TEST_CASE("post-accept hook runs once per accepted step") {
  auto rhs = [](double, const ComplexVec& y, ComplexVec& dy) { dy[0] = -y[0]; };
  std::size_t calls = 0;
  auto hook = [&calls](double, ComplexVec&) {
    ++calls;
    return ode::HookResult{};
  };
  const auto sol = ode::solve(rhs, {Complex(1.0, 0.0)}, {0.0, 1.0}, {}, hook);
  REQUIRE_FALSE(sol.failure.has_value());
  CHECK(calls == sol.stats.accepted);
}

TEST_CASE("projection marks the derivative stale and still converges") {
  // Decay toward zero with a hook that clamps any positive overshoot; the
  // solution must remain nonpositive and accurate.
  auto rhs = [](double, const ComplexVec& y, ComplexVec& dy) {
    dy[0] = -5.0 * y[0];
  };
  auto hook = [](double, ComplexVec& y) {
    ode::HookResult hr;
    if (y[0].real() > 0.0) y[0] = Complex(0.0, y[0].imag());
    hr.changed = true;  // always refresh the FSAL derivative
    return hr;
  };
  const auto sol = ode::solve(rhs, {Complex(-1.0, 0.0)}, {0.0, 1.0, 3.0}, {}, hook);
  REQUIRE_FALSE(sol.failure.has_value());
  CHECK(sol.y[1][0].real() <= 0.0);
  CHECK(std::abs(sol.y[1][0].real() + std::exp(-5.0)) < 1e-7);
}

TEST_CASE("non-finite right-hand side fails fast") {
  auto rhs = [](double, const ComplexVec&, ComplexVec& dy) {
    dy[0] = Complex(std::nan(""), 0.0);
  };
  const auto sol = ode::solve(rhs, {Complex(1.0, 0.0)}, {0.0, 1.0});
  REQUIRE(sol.failure.has_value());
  CHECK(sol.failure->kind == ode::FailureKind::NonFiniteState);
}

TEST_CASE("mid-course blow-up shrinks the step until underflow") {
  auto rhs = [](double t, const ComplexVec&, ComplexVec& dy) {
    dy[0] = t < 0.5 ? Complex(1.0, 0.0) : Complex(std::nan(""), 0.0);
  };
  const auto sol = ode::solve(rhs, {Complex(-1.0, 0.0)}, {0.0, 1.0});
  REQUIRE(sol.failure.has_value());
  CHECK(sol.failure->kind == ode::FailureKind::StepUnderflow);
  CHECK(sol.failure->time <= 0.5 + 1e-6);
}

TEST_CASE("step budget is enforced") {
  auto rhs = [](double, const ComplexVec& y, ComplexVec& dy) { dy[0] = -y[0]; };
  ode::Options opt;
  opt.max_steps = 3;
  const auto sol = ode::solve(rhs, {Complex(1.0, 0.0)}, {0.0, 1000.0}, opt);
  REQUIRE(sol.failure.has_value());
  CHECK(sol.failure->kind == ode::FailureKind::MaxSteps);
}
