#pragma once

// Cross-validation of the simulator against the cumulant flow: Monte Carlo
// Laplace transforms, the exponential martingale, Dynkin residuals, the
// generator identity, and the branching (convolution) property.  Every check
// returns a VerificationReport whose pass flag is recomputable as
// |estimate - reference| <= k * std_error + 1e-14 (|estimate|+|reference|+1).

#include <cstdint>
#include <string>
#include <vector>

#include "cbflow/cumulant.hpp"
#include "cbflow/mechanism.hpp"
#include "cbflow/simulate.hpp"
#include "cbflow/types.hpp"

namespace cbflow {

struct ReportMeta {
  double t = 0.0;  // evaluation time (u for multi-checkpoint statistics)
  ComplexVec lambda;
  RealVec x0;
  std::uint64_t config_digest = 0;  // FNV-1a over the numeric configuration
};

struct VerificationReport {
  std::string statistic;
  Complex estimate{};
  Complex reference{};
  double std_error = 0.0;
  std::size_t n_paths = 0;
  double k = 3.0;
  bool pass = false;
  ReportMeta meta;
};

struct VerifyOptions {
  double k = 3.0;   // width of the acceptance band in standard errors
  int threads = 0;  // 0: CB_THREADS, then hardware
  FlowOptions flow; // tolerances for the reference flows
};

// Bounded test functions f in the generator domain.  The exponential kind is
// f(x) = exp<lambda, x> with Re lambda < 0 componentwise; the time-exponential
// kind is f(t, x) = exp<K(u - t, lambda), x> with the flow precomputed at the
// evaluation times handed to the factory.  Both vanish at the cemetery.
class TestFunction {
 public:
  enum class Kind { Exponential, TimeExponential };

  static TestFunction exponential(const LeftHalfPoint& lambda);
  static TestFunction time_exponential(const BranchingMechanism& mech,
                                       const LeftHalfPoint& lambda, double u,
                                       const RealVec& eval_times,
                                       const FlowOptions& opt = {});

  Kind kind() const { return kind_; }
  double horizon() const { return u_; }  // 0 for the exponential kind

  // exponent at time t: lambda itself, or K(u - t, lambda) from the table
  const ComplexVec& exponent_at(double t) const;

  Complex value(double t, const RealVec& x) const;            // f(t, x)
  Complex time_derivative(double t, const RealVec& x) const;  // f'_0
  Complex gradient(double t, const RealVec& x, std::size_t k) const;
  Complex second_diag(double t, const RealVec& x, std::size_t k) const;
  // f(t, x+z) - f(t, x) - z_k f'_k(t, x) 1{|z| <= 1}: the integrand of the
  // jump part of the generator for row k, evaluated without factoring.
  Complex jump_difference(double t, const RealVec& x, const RealVec& z,
                          std::size_t k) const;

 private:
  TestFunction() = default;
  std::size_t lookup(double t) const;

  Kind kind_ = Kind::Exponential;
  double u_ = 0.0;
  ComplexVec lam_;
  RealVec times_;                   // sorted evaluation times
  std::vector<ComplexVec> kvals_;   // K(u - t) per evaluation time
  std::vector<ComplexVec> hvals_;   // H(K(u - t)) per evaluation time
};

// Empirical mean of exp<lambda, xi(t)> (cemetery contributes 0) against the
// flow reference.  lambda = 0 switches to survival counting against the
// minimal-zero mass; otherwise Re lambda < 0 componentwise is required.
VerificationReport monte_carlo_laplace(const BranchingMechanism& mech,
                                       const RealVec& x0, double t,
                                       const LeftHalfPoint& lambda,
                                       std::size_t n_paths,
                                       const SimConfig& config,
                                       const VerifyOptions& opt = {});

// Empirical mean of exp<K(u - t, lambda), xi(t)> at each checkpoint against
// the constant exp<K(u, lambda), x0>.
std::vector<VerificationReport> martingale_residual(
    const BranchingMechanism& mech, const RealVec& x0,
    const LeftHalfPoint& lambda, double u, const RealVec& checkpoints,
    std::size_t n_paths, const SimConfig& config, const VerifyOptions& opt = {});

// Generator applied to an exponential test function, assembled term by term
// (drift, diffusion, jump integrals by direct quadrature on raw differences
// of f).  Asserts agreement with the closed form f(x) <x, H(lambda)> within
// 1e-6 relative (atomic jump parts) or 1e-5 (stable tails) and returns the
// assembled value.
Complex generator_apply(const BranchingMechanism& mech, const TestFunction& f,
                        const RealVec& x, const QuadControl& ctl = {});

// Simulation grid used by dynkin_residual for horizon u: every Euler step
// time.  Time-exponential test functions must be built on this grid.
RealVec dynkin_time_grid(double u, const SimConfig& config);

// Empirical mean of f(t, xi(t)) - f(0, x0) - int_0^t (f'_0 + Af)(s, xi(s)) ds
// per checkpoint (trapezoid rule on the simulation grid), which should vanish.
std::vector<VerificationReport> dynkin_residual(
    const BranchingMechanism& mech, const RealVec& x0, const TestFunction& f,
    double u, const RealVec& checkpoints, std::size_t n_paths,
    const SimConfig& config, const VerifyOptions& opt = {});

// Empirical mean of exp<lambda, xi_x(t) + xi_y(t)> over independent path
// pairs (disjoint substream ranges) against the flow started from x + y.
VerificationReport branching_property_check(
    const BranchingMechanism& mech, const RealVec& x, const RealVec& y,
    double t, const LeftHalfPoint& lambda, std::size_t n_paths,
    const SimConfig& config, const VerifyOptions& opt = {});

}  // namespace cbflow
