#include <cmath>
#include <complex>
#include <stdexcept>

#include <doctest.h>

#include "cbflow/mechanism.hpp"
#include "cbflow/rng.hpp"

using namespace cbflow;

namespace {

const double kPi = std::acos(-1.0);

BranchingMechanism one_row(RealVec alpha, double beta, LevyMeasure levy) {
  BranchingMechanism mech;
  mech.m = alpha.size();
  MechanismRow row;
  row.alpha = std::move(alpha);
  row.beta = beta;
  row.levy = std::move(levy);
  mech.rows.push_back(std::move(row));
  return mech;
}

bool has_rule(const ValidationReport& rep, const char* rule) {
  for (const Violation& v : rep.violations)
    if (v.rule == rule) return true;
  return false;
}

Complex lhp1(const BranchingMechanism& mech, Complex lam) {
  return eval_mechanism(mech, LeftHalfPoint(ComplexVec{lam}))[0];
}

}  // namespace

TEST_CASE("left-half-plane points reject positive real parts") {
  CHECK_NOTHROW(LeftHalfPoint(ComplexVec{Complex(0.0, 3.0)}));
  CHECK_NOTHROW(LeftHalfPoint(ComplexVec{Complex(-1.0, 0.0), Complex(-2.0, 5.0)}));
  CHECK_THROWS_AS(LeftHalfPoint(ComplexVec{Complex(1e-12, 0.0)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(LeftHalfPoint(ComplexVec{Complex(std::nan(""), 0.0)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(LeftHalfPoint(ComplexVec{}), std::invalid_argument);
}

TEST_CASE("validation flags negative off-diagonal drift") {
  BranchingMechanism mech;
  mech.m = 2;
  mech.rows.push_back({{-1.0, -0.1}, 0.0, LevyZero{}});
  mech.rows.push_back({{0.3, -2.0}, 1.0, LevyZero{}});
  const ValidationReport rep = validate_mechanism(mech);
  CHECK_FALSE(rep.pass);
  CHECK(has_rule(rep, "off-diagonal drift negative"));
  CHECK(rep.violations[0].detail.find("alpha[1][2]") != std::string::npos);
}

TEST_CASE("validation flags negative diffusion") {
  const auto mech = one_row({0.0}, -0.5, LevyZero{});
  const ValidationReport rep = validate_mechanism(mech);
  CHECK_FALSE(rep.pass);
  CHECK(has_rule(rep, "diffusion negative"));
}

TEST_CASE("foreign-axis stable measure must have a finite first moment") {
  BranchingMechanism mech;
  mech.m = 2;
  mech.rows.push_back({{-1.0, 0.0}, 0.0, LevyAxisStable{1, 1.2, 1.0}});
  mech.rows.push_back({{0.0, -1.0}, 0.0, LevyZero{}});
  ValidationReport rep = validate_mechanism(mech);
  CHECK_FALSE(rep.pass);
  CHECK(has_rule(rep, "cross-axis first-moment divergence"));

  // alpha < 1 integrates the linear weight, alpha >= 2 never validates
  mech.rows[0].levy = LevyAxisStable{1, 0.8, 1.0};
  CHECK(validate_mechanism(mech).pass);
  mech.rows[0].levy = LevyAxisStable{0, 1.2, 1.0};
  CHECK(validate_mechanism(mech).pass);
}

TEST_CASE("remaining structural rules each produce a violation") {
  BranchingMechanism empty;
  empty.m = 0;
  CHECK_FALSE(validate_mechanism(empty).pass);

  BranchingMechanism short_rows;
  short_rows.m = 2;
  short_rows.rows.push_back({{-1.0, 0.0}, 0.0, LevyZero{}});
  CHECK(has_rule(validate_mechanism(short_rows), "row count mismatch"));

  auto bad_len = one_row({0.0}, 0.0, LevyZero{});
  bad_len.rows[0].alpha = {0.0, 1.0};
  CHECK(has_rule(validate_mechanism(bad_len), "drift row length mismatch"));

  auto nonfinite = one_row({std::nan("")}, 0.0, LevyZero{});
  CHECK(has_rule(validate_mechanism(nonfinite), "non-finite parameter"));

  auto bad_atom = one_row({0.0}, 0.0, LevyFiniteAtoms{{{{-1.0}, 1.0}}});
  CHECK(has_rule(validate_mechanism(bad_atom), "atom outside state space"));

  auto origin_atom = one_row({0.0}, 0.0, LevyFiniteAtoms{{{{0.0}, 1.0}}});
  CHECK(has_rule(validate_mechanism(origin_atom), "atom at origin"));

  auto bad_mass = one_row({0.0}, 0.0, LevyFiniteAtoms{{{{1.0}, 0.0}}});
  CHECK(has_rule(validate_mechanism(bad_mass), "atom mass nonpositive"));

  auto bad_axis = one_row({0.0}, 0.0, LevyAxisStable{3, 0.5, 1.0});
  CHECK(has_rule(validate_mechanism(bad_axis), "axis out of range"));

  auto bad_index = one_row({0.0}, 0.0, LevyAxisStable{0, 2.5, 1.0});
  CHECK(has_rule(validate_mechanism(bad_index), "stable index out of range"));

  auto bad_scale = one_row({0.0}, 0.0, LevyAxisStable{0, 0.5, -1.0});
  CHECK(has_rule(validate_mechanism(bad_scale), "stable scale nonpositive"));
}

TEST_CASE("require_valid names the violated rule") {
  const auto mech = one_row({0.0}, -1.0, LevyZero{});
  try {
    require_valid(mech);
    FAIL("expected a validation failure");
  } catch (const InvalidMechanismError& e) {
    CHECK(std::string(e.what()).find("diffusion negative") != std::string::npos);
  }
}

TEST_CASE("evaluation rejects dimension mismatch") {
  const auto mech = one_row({-1.0}, 0.0, LevyZero{});
  CHECK_THROWS_AS(
      (void)eval_mechanism(mech, LeftHalfPoint::from_real({-1.0, -1.0})),
      std::invalid_argument);
}

TEST_CASE("single unit atom evaluates exactly") {
  // H(lambda) = e^lambda - 1 - lambda for an atom at 1 with unit mass, so
  // H(-1) = 1/e and H(0) = 0.
  const auto mech = one_row({0.0}, 0.0, LevyFiniteAtoms{{{{1.0}, 1.0}}});
  CHECK(lhp1(mech, Complex(-1.0, 0.0)).real() ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(std::abs(lhp1(mech, Complex(0.0, 0.0))) == 0.0);
}

TEST_CASE("evaluation is exactly zero at the origin") {
  const auto stable = stable_mechanism(2.0, 0.5);
  const ComplexVec h = eval_mechanism(stable, LeftHalfPoint::zero(1));
  CHECK(h[0] == Complex(0.0, 0.0));
}

TEST_CASE("real arguments give real values") {
  const auto mech = one_row({-0.5}, 1.5, LevyAxisStable{0, 0.7, 0.4});
  for (double x : {-0.1, -1.0, -10.0}) {
    const Complex h = lhp1(mech, Complex(x, 0.0));
    CHECK(std::fabs(h.imag()) < 1e-12 * (1.0 + std::fabs(h.real())));
  }
}

TEST_CASE("stable family reproduces its closed-form branching rate") {
  for (double sigma : {1.0, 2.0}) {
    for (double alpha : {0.3, 0.5, 0.8}) {
      const auto mech = stable_mechanism(sigma, alpha);
      CHECK(validate_mechanism(mech).pass);
      for (double x : {-0.1, -1.0, -10.0}) {
        const double expected = -sigma * std::pow(-x, alpha);
        const Complex h = lhp1(mech, Complex(x, 0.0));
        CHECK(std::fabs(h.real() - expected) < 1e-8 * std::fabs(expected));
      }
    }
  }
  // alpha = 1 degenerates to pure linear drift
  const auto lin = stable_mechanism(3.0, 1.0);
  CHECK(lhp1(lin, Complex(-2.0, 0.0)).real() == doctest::Approx(-6.0));
}

TEST_CASE("stable construction constants") {
  CHECK(std::fabs(std::tgamma(0.5) - std::sqrt(kPi)) < 1e-15);
  const auto mech = stable_mechanism(2.0, 0.5);
  const auto& st = std::get<LevyAxisStable>(mech.rows[0].levy);
  CHECK(st.scale == doctest::Approx(0.5641895835477563).epsilon(1e-15));
  CHECK(mech.rows[0].alpha[0] == doctest::Approx(1.1283791670955126).epsilon(1e-15));
  CHECK_THROWS_AS(stable_mechanism(0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(stable_mechanism(1.0, 1.5), std::invalid_argument);
}

TEST_CASE("exponential jump integral matches reference values") {
  // References from the Levy-Khintchine closed form evaluated at 40 digits:
  // uncompensated = Gamma(-a) (-lam)^a for a in (0,1), and the unit-band
  // compensated value adds -lam/(1-a) for any a in (0,2) \ {1}.
  struct Ref {
    double alpha;
    Complex lam;
    bool compensate;
    Complex value;
  };
  const Ref refs[] = {
      {0.5, {-1.0, 2.0}, true, {-2.5091922524173926891, -1.2131659261983561162}},
      {1.5, {-3.0, 0.0}, true, {6.2799204953578618618, 0.0}},
      {1.2, {-0.25, 0.5}, true, {-0.67098655620186755292, 0.15646754005871909975}},
      {0.4, {-1.0, 2.0}, false, {-4.6411686762944915115, 2.2012064869376533651}},
      {0.7, {-2.0, 0.0}, false, {-6.9425973688978375116, 0.0}},
      {0.9, {-0.5, -1.0}, false, {-6.3496109873439200162, -9.8117949078301832709}},
      {0.5, {0.0, 2.0}, true, {-3.5449077018110320546, -0.4550922981889679454}},
      {0.4, {0.0, 1.0}, false, {-3.0119545929525353963, 2.1883131042010927958}},
  };
  for (const Ref& r : refs) {
    const auto I = detail::axis_stable_exp_integral(r.alpha, 1.0, r.lam,
                                                    r.compensate, QuadControl{});
    CHECK(I.converged);
    CHECK(std::abs(I.value - r.value) < 1e-9 * std::abs(r.value));
    CHECK(std::abs(I.value - r.value) <= 10.0 * I.error + 1e-12);
  }
}

TEST_CASE("tiny arguments keep the fat tail") {
  // For 0 < alpha < 1 the uncompensated integral has the closed form
  // Gamma(-alpha) (-lambda)^alpha; at lambda = -1e-9 nearly all mass sits far
  // beyond any fixed truncation radius.
  const double alpha = 0.5;
  const Complex lam(-1e-9, 0.0);
  const double expected = -2.0 * std::sqrt(kPi) * std::sqrt(1e-9);
  const auto I =
      detail::axis_stable_exp_integral(alpha, 1.0, lam, false, QuadControl{});
  CHECK(I.converged);
  CHECK(std::fabs(I.value.real() - expected) < 1e-9 * std::fabs(expected));
}

TEST_CASE("rational tilt integral obeys its closed form") {
  // For alpha < 1: tilt = 1/(1-alpha) - (pi/2)/cos(pi alpha/2).
  for (double alpha : {0.3, 0.5, 0.8}) {
    const double expected =
        1.0 / (1.0 - alpha) - 0.5 * kPi / std::cos(0.5 * kPi * alpha);
    CHECK(detail::axis_stable_tilt(alpha, 1.0, QuadControl{}) ==
          doctest::Approx(expected).epsilon(1e-10));
  }
  CHECK(std::fabs(detail::axis_stable_tilt(1.0, 1.0, QuadControl{})) < 1e-12);
  CHECK(detail::axis_stable_tilt(1.5, 1.0, QuadControl{}) ==
        doctest::Approx(-detail::axis_stable_tilt(0.5, 1.0, QuadControl{}))
            .epsilon(1e-10));
  CHECK(detail::axis_stable_tilt(0.5, 3.0, QuadControl{}) ==
        doctest::Approx(3.0 * detail::axis_stable_tilt(0.5, 1.0, QuadControl{}))
            .epsilon(1e-12));
}

TEST_CASE("drift conversion between compensator conventions round-trips") {
  // Evaluating the rational form with drift a must agree with the
  // unit-band form with drift alpha = convert(a).
  BranchingMechanism rational;
  rational.m = 2;
  rational.rows.push_back(
      {{-1.0, 0.5}, 2.0, LevyFiniteAtoms{{{{0.3, 0.4}, 1.5}, {{2.0, 1.0}, 0.25}}}});
  rational.rows.push_back({{0.3, -2.0}, 0.0, LevyAxisStable{1, 0.6, 0.8}});

  BranchingMechanism unit = rational;
  for (std::size_t i = 0; i < unit.m; ++i)
    unit.rows[i].alpha =
        convert_a_to_alpha(rational.rows[i].alpha, rational.rows[i].levy, i);

  rng::Stream s{2024};
  for (int rep = 0; rep < 20; ++rep) {
    ComplexVec lam(2);
    for (auto& v : lam)
      v = Complex(-3.0 * s.uniform_pos(), 4.0 * s.uniform01() - 2.0);
    const auto ha = eval_mechanism_detailed(rational, LeftHalfPoint(lam),
                                            QuadControl{}, DriftForm::Rational);
    const auto hb = eval_mechanism_detailed(unit, LeftHalfPoint(lam), QuadControl{},
                                            DriftForm::Compensated);
    for (std::size_t i = 0; i < 2; ++i) {
      const double scale = std::max(1.0, std::abs(hb.H[i]));
      CHECK(std::abs(ha.H[i] - hb.H[i]) < 1e-10 * scale);
    }
  }
}

TEST_CASE("atom conversion matches the direct formula") {
  const LevyMeasure levy =
      LevyFiniteAtoms{{{{0.5, 0.1}, 2.0}, {{3.0, 0.0}, 0.5}}};
  const RealVec a{1.0, -0.25};
  const RealVec conv = convert_a_to_alpha(a, levy, 0);
  // |z| = 0.6 atom: inside the unit band, weight 1 - 1/1.36;
  // |z| = 3 atom: outside, weight -1/10.
  const double expected =
      1.0 + 2.0 * 0.5 * (1.0 - 1.0 / 1.36) + 0.5 * 3.0 * (0.0 - 1.0 / 10.0);
  CHECK(conv[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(conv[1] == a[1]);
}

TEST_CASE("tail services use the stable closed forms") {
  const LevyMeasure levy = LevyAxisStable{0, 0.5, 1.0};
  const TailServices ts = levy_tail_services(levy, 1, 0.01);
  CHECK(ts.tail_mass == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(ts.compensator[0] == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(ts.second_moment[0][0] == doctest::Approx(1e-3 / 1.5).epsilon(1e-12));

  const TailServices unit = levy_tail_services(levy, 1, 1.0);
  CHECK(unit.tail_mass == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(unit.compensator[0] == 0.0);

  const TailServices log_case =
      levy_tail_services(LevyAxisStable{0, 1.0, 2.0}, 1, 0.1);
  CHECK(log_case.compensator[0] == doctest::Approx(2.0 * std::log(10.0)));

  CHECK_THROWS_AS(levy_tail_services(levy, 1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(levy_tail_services(levy, 1, 1.5), std::invalid_argument);
}

TEST_CASE("tail services split atoms around the threshold") {
  const LevyMeasure levy = LevyFiniteAtoms{
      {{{0.3, 0.2}, 2.0}, {{0.6, 0.3}, 4.0}, {{2.0, 0.0}, 3.0}}};
  const TailServices ts = levy_tail_services(levy, 2, 0.5);
  // |z| = 0.5 atom is below (ties go to the small side), 0.9 and 2.0 are tail
  CHECK(ts.tail_mass == doctest::Approx(7.0));
  CHECK(ts.compensator[0] == doctest::Approx(4.0 * 0.6));
  CHECK(ts.compensator[1] == doctest::Approx(4.0 * 0.3));
  CHECK(ts.second_moment[0][0] == doctest::Approx(2.0 * 0.09));
  CHECK(ts.second_moment[0][1] == doctest::Approx(2.0 * 0.06));
}

TEST_CASE("power tail sampling matches its survival function") {
  const TailServices ts = levy_tail_services(LevyAxisStable{0, 0.5, 1.0}, 1, 0.01);
  rng::Stream s{77};
  const int n = 100000;
  int beyond = 0;
  for (int i = 0; i < n; ++i) {
    const RealVec z = ts.sample_jump(s);
    CHECK(z[0] >= 0.01);
    if (z[0] > 0.04) ++beyond;
  }
  const double p = 0.5;  // (0.04 / 0.01)^{-1/2}
  const double se = std::sqrt(p * (1.0 - p) / n);
  CHECK(std::fabs(static_cast<double>(beyond) / n - p) < 4.0 * se);
}

TEST_CASE("atom sampling matches mass proportions") {
  const LevyMeasure levy = LevyFiniteAtoms{{{{2.0, 0.0}, 1.0}, {{0.0, 3.0}, 3.0}}};
  const TailServices ts = levy_tail_services(levy, 2, 1.0);
  CHECK(ts.tail_mass == doctest::Approx(4.0));
  rng::Stream s{31337};
  const int n = 100000;
  int second = 0;
  for (int i = 0; i < n; ++i)
    if (ts.sample_jump(s)[1] > 0.0) ++second;
  const double se = std::sqrt(0.75 * 0.25 / n);
  CHECK(std::fabs(second / static_cast<double>(n) - 0.75) < 4.0 * se);
}

TEST_CASE("sampling an empty tail is a domain error") {
  rng::Stream s{1};
  const TailServices none = levy_tail_services(LevyZero{}, 2, 0.5);
  CHECK(none.tail_mass == 0.0);
  CHECK_THROWS_AS((void)none.sample_jump(s), std::domain_error);
}
