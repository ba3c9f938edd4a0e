#pragma once
// Cumulant semigroup K(t, lambda) of a branching mechanism: the flow solves
//
//   dK/dt(t, lambda) = H(K(t, lambda)),   K(0, lambda) = lambda,
//
// componentwise over the closed left half-space.  On top of the flow solver
// sit the semigroup-law defect, the minimal solution at lambda = 0 (epsilon
// ladder with sequence acceleration), conservativeness verdicts, Laplace
// transforms, and the residual certificate for the half-stable
// non-uniqueness family.

#include <optional>
#include <stdexcept>
#include <vector>

#include "cbflow/mechanism.hpp"
#include "cbflow/ode.hpp"
#include "cbflow/types.hpp"

namespace cbflow {

struct FlowOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  QuadControl quad{};  // accuracy of the H evaluations inside the solver
  std::size_t max_steps = 2000000;
};

struct CumulantFlow {
  ComplexVec lambda0;
  RealVec times;
  std::vector<ComplexVec> values;  // values[j] = K(times[j], lambda0)
  ode::Stats stats;
  std::optional<ode::Failure> failure;  // set when the flow stops early

  bool complete() const { return !failure.has_value(); }
};

class FlowError : public std::runtime_error {
 public:
  FlowError(const std::string& what, ode::Failure f)
      : std::runtime_error(what), failure(std::move(f)) {}
  ode::Failure failure;
};

// Integrates the flow on the given output grid (grid[0] must be 0).  After
// every accepted step a component with real part in (0, abs_tol] is projected
// to the imaginary axis; real part > abs_tol stops the flow with a
// domain-escape failure recorded at the last reached time.  Flows are never
// started from pure-imaginary boundary points (only reached as limits).
CumulantFlow solve_cumulant(const BranchingMechanism& mech,
                            const LeftHalfPoint& lambda, const RealVec& grid,
                            const FlowOptions& opt = {});

// max_i |K_i(s+t, lambda) - K_i(s, K(t, lambda))|, both sides by solve_cumulant.
double semigroup_defect(const BranchingMechanism& mech, const LeftHalfPoint& lambda,
                        double s, double t, const FlowOptions& opt = {});

// Independent certificate of the integral form K = lambda + int_0^t H(K(s)) ds
// on a uniform odd-length grid: cumulative composite Simpson over the stored
// values, max residual across grid points and components.
double integral_form_residual(const BranchingMechanism& mech,
                              const CumulantFlow& flow,
                              const QuadControl& ctl = {});

struct MinimalZeroOptions {
  int k_min = 4;
  int k_max = 24;          // ladder lambda = -2^{-k} * 1
  double stall_tol = 1e-9;
  int min_samples = 8;     // ladder entries before the stall test may fire
  FlowOptions solver;

  MinimalZeroOptions() {
    solver.rel_tol = 1e-12;
    solver.abs_tol = 1e-14;
    solver.quad.rel_tol = 1e-13;
    solver.quad.abs_tol = 1e-16;
  }
};

struct MinimalZeroResult {
  CumulantFlow flow;     // K(t, 0): the epsilon -> 0 limit, real and <= 0
  bool conclusive = true;  // stall tolerance reached within the ladder
  double gap = 0.0;        // sup-norm change of the last two estimates
  int k_reached = 0;
};

// K(t, 0) := lim_{eps -> 0} K(t, -eps 1), computed along eps = 2^{-k} with
// raw monotonicity asserted and Wynn epsilon extrapolation of the ladder
// (the raw sequence alone stalls far outside tolerance for heavy tails).
MinimalZeroResult minimal_solution_at_zero(const BranchingMechanism& mech,
                                           const RealVec& grid,
                                           const MinimalZeroOptions& opt = {});

enum class Verdict { ConservativeEvidence, NonConservative, Inconclusive };

struct GreyEvidence {
  bool applicable = false;       // only one-type mechanisms have the test
  bool divergent = false;        // integral of d(lam)/max(0, -H(-lam)) diverges
  bool nonpositive_rate = false; // -H(-lam) <= 0 somewhere: divergence by convention
  double exponent = 0.0;         // fitted p in -H(-lam) ~ lam^p near 0
  RealVec partial_integrals;     // per-decade integrals, lam from 1e-1 down to 1e-10
};

struct ConservativenessReport {
  Verdict verdict = Verdict::Inconclusive;
  double sup_minimal_zero = 0.0;  // sup_{t <= T} |K(t,0)| (max over components)
  bool minimal_conclusive = true;
  GreyEvidence grey;
};

// Non-conservative iff the minimal solution leaves 0 beyond tol; conservative
// evidence additionally requires (for m = 1) the Grey integral to diverge.
ConservativenessReport conservativeness_verdict(const BranchingMechanism& mech,
                                                double T, double tol = 1e-7);

// exp{<x, K(t, lambda)>}; lambda interior or real.
Complex laplace_transform(const BranchingMechanism& mech, const RealVec& x, double t,
                          const LeftHalfPoint& lambda, const FlowOptions& opt = {});

struct SurvivalMass {
  double value = 1.0;  // P(t, x, D) = exp{<x, K(t,0)>}
  bool conclusive = true;
};

SurvivalMass survival_mass(const BranchingMechanism& mech, const RealVec& x, double t,
                           const MinimalZeroOptions& opt = {});

// Residual sup_{t <= T} |K^r(t) - int_0^t H(K^r(s)) ds| for the explicit
// family K^r(t) = -(t - r)^2 1{t > r} solving the sigma=2, alpha=1/2 stable
// equation at lambda = 0; r = +inf selects the zero branch.
double nonuniqueness_residual(double r, double T,
                              const QuadControl& ctl = QuadControl{1e-13, 1e-16});

namespace detail {
// Wynn epsilon extrapolation of a real sequence; returns the even-column
// entry with the smallest trailing gap (gap reported through *gap_out).
double wynn_limit(const std::vector<double>& seq, double* gap_out);
}  // namespace detail

}  // namespace cbflow
