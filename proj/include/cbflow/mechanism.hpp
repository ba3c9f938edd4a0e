#pragma once
// Branching mechanisms H = (H_1,...,H_m) of multi-type continuous-state
// branching processes:
//
//   H_i(lambda) = <alpha_i, lambda> + (1/2) beta_i lambda_i^2
//               + integral( e^{<lambda,z>} - 1 - lambda_i z_i 1{|z|<=1} ) pi_i(dz)
//
// over lambda in the closed left half-space C_-^m.  Levy measures pi_i are
// restricted to three parametric variants (zero, finite atom lists, and a
// one-axis stable power law c r^{-1-alpha} dr), which keeps every integral
// either an exact sum or a 1-D quadrature.  |z| is the l1 norm.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cbflow/rng.hpp"
#include "cbflow/types.hpp"

namespace cbflow {

// ===== domain types =====

// Point of C_-^m: every component has nonpositive real part.
struct LeftHalfPoint {
  ComplexVec c;

  explicit LeftHalfPoint(ComplexVec v);
  static LeftHalfPoint from_real(const RealVec& r);
  static LeftHalfPoint zero(std::size_t m);

  std::size_t size() const { return c.size(); }
  const Complex& operator[](std::size_t i) const { return c[i]; }
};

struct LevyZero {};

struct LevyAtom {
  RealVec z;     // jump vector in [0,inf)^m \ {0}
  double mass;   // > 0
};

struct LevyFiniteAtoms {
  std::vector<LevyAtom> atoms;
};

// The measure c * r^{-1-alpha} dr on the ray {r * e_axis : r > 0}.
struct LevyAxisStable {
  std::size_t axis = 0;   // 0-based coordinate index
  double alpha = 0.5;     // in (0,2)
  double scale = 1.0;     // c > 0
};

using LevyMeasure = std::variant<LevyZero, LevyFiniteAtoms, LevyAxisStable>;

struct MechanismRow {
  RealVec alpha;                  // drift row alpha_i (length m)
  double beta = 0.0;              // diffusion coefficient, >= 0
  LevyMeasure levy = LevyZero{};  // jump measure pi_i
};

struct BranchingMechanism {
  std::size_t m = 0;
  std::vector<MechanismRow> rows;
};

struct Violation {
  std::size_t row;      // offending coordinate (0-based); row == m means global
  std::string rule;
  std::string detail;
};

struct ValidationReport {
  bool pass = true;
  std::vector<Violation> violations;
};

class InvalidMechanismError : public std::invalid_argument {
 public:
  explicit InvalidMechanismError(const std::string& what)
      : std::invalid_argument(what) {}
};

class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double achieved)
      : std::runtime_error(what), achieved_error(achieved) {}
  double achieved_error;
};

// Per-call accuracy control for the Levy quadratures.
struct QuadControl {
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
};

// ===== validation =====

// Admissibility: off-diagonal drift >= 0, beta >= 0, shapes consistent, and
// each Levy measure integrable against (sum_{j!=i} z_j + z_i^2) ^ 1; an
// axis-stable measure on a foreign axis needs alpha < 1 for that.
ValidationReport validate_mechanism(const BranchingMechanism& mech);
void require_valid(const BranchingMechanism& mech);  // throws InvalidMechanismError

// ===== evaluation =====

struct MechanismEvaluation {
  ComplexVec H;
  double quad_error = 0.0;   // worst absolute error estimate across components
  bool converged = true;
  bool oscillatory = false;  // boundary (pure-imaginary) quadrature past budget
};

enum class DriftForm {
  Compensated,  // alpha-form: unit-ball indicator compensation
  Rational      // a-form: z_i / (1 + |z|^2) compensation
};

MechanismEvaluation eval_mechanism_detailed(const BranchingMechanism& mech,
                                            const LeftHalfPoint& lambda,
                                            const QuadControl& ctl = {},
                                            DriftForm form = DriftForm::Compensated);

// Returns H(lambda); throws QuadratureError on interior non-convergence.
// Boundary points (Re = 0, Im != 0) never throw, they come back flagged via
// eval_mechanism_detailed instead.
ComplexVec eval_mechanism(const BranchingMechanism& mech, const LeftHalfPoint& lambda,
                          const QuadControl& ctl = {});

// Drift-row conversion between the two Levy-Khintchine parameterizations:
// alpha_ii = a_ii + integral z_i (1{|z|<=1} - 1/(1+|z|^2)) pi_i(dz),
// off-diagonal entries unchanged.
RealVec convert_a_to_alpha(const RealVec& a_row, const LevyMeasure& levy,
                           std::size_t i, const QuadControl& ctl = {});

// One-dimensional stable family: eval_mechanism == -sigma*(-lambda)^alpha.
// alpha == 1 degenerates to the pure drift sigma*lambda.
BranchingMechanism stable_mechanism(double sigma, double alpha);

// ===== tail services (simulation-facing decomposition) =====

struct TailServices {
  double eps = 0.0;
  std::size_t m = 0;
  double tail_mass = 0.0;      // pi(|z| > eps)
  RealVec compensator;         // integral_{eps < |z| <= 1} z pi(dz)
  RealMat second_moment;       // integral_{|z| <= eps} z z^T pi(dz)

  // Draws from pi conditioned on {|z| > eps}; throws std::domain_error when
  // tail_mass == 0.
  RealVec sample_jump(rng::Stream& stream) const;

  // sampler payload
  struct AtomTable {
    std::vector<double> cumulative;  // cumulative masses of tail atoms
    std::vector<RealVec> jumps;
  };
  struct PowerTail {
    std::size_t axis = 0;
    double alpha = 0.5;
  };
  std::variant<std::monostate, AtomTable, PowerTail> sampler;
};

TailServices levy_tail_services(const LevyMeasure& levy, std::size_t m, double eps);

// ===== internals exposed for targeted tests =====

namespace detail {

struct LevyExpIntegral {
  Complex value{0.0, 0.0};
  double error = 0.0;
  bool converged = true;
  bool oscillatory = false;
  int evaluations = 0;
};

// integral_0^inf ( e^{lam r} - 1 - [compensate] lam r 1{r<=1} ) c r^{-1-alpha} dr
// for Re lam <= 0; boundary Re lam == 0 handled by contour rotation.
LevyExpIntegral axis_stable_exp_integral(double alpha, double scale, Complex lam,
                                         bool compensate_unit_band,
                                         const QuadControl& ctl);

// integral_0^inf r (1{r<=1} - 1/(1+r^2)) c r^{-1-alpha} dr  (drift tilt between
// the two parameterizations, own-axis case)
double axis_stable_tilt(double alpha, double scale, const QuadControl& ctl);

// Evaluation core over a raw complex vector; clamps Re to <= 0 first when
// asked (Runge-Kutta stages may graze the boundary by roundoff).
MechanismEvaluation eval_components(const BranchingMechanism& mech,
                                    const ComplexVec& lambda, const QuadControl& ctl,
                                    DriftForm form, bool clamp_re);

}  // namespace detail

}  // namespace cbflow
