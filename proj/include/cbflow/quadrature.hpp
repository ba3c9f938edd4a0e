#pragma once
// Adaptive Gauss-Kronrod quadrature for complex-valued integrands on finite
// intervals.  G7/K15 pair, worst-interval-first refinement against a global
// error budget.  Serves the Levy integrals behind mechanism evaluation and
// the generator cross-checks; endpoints are never evaluated (all nodes are
// interior), so integrable endpoint singularities are tolerated.

#include <functional>

#include "cbflow/types.hpp"

namespace cbflow::quad {

struct Options {
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
  int max_intervals = 4000;
};

struct Result {
  Complex value{0.0, 0.0};
  double error = 0.0;    // absolute error estimate
  int evaluations = 0;
  bool converged = true;
};

using Integrand = std::function<Complex(double)>;

// integral of f over [a, b]
Result integrate(const Integrand& f, double a, double b, const Options& opt = {});

// integral of f(r) dr over [ra, rb] with 0 < ra < rb, computed through the
// substitution r = e^u; suited to power-law integrands over wide ranges
Result integrate_log(const Integrand& f, double ra, double rb, const Options& opt = {});

}  // namespace cbflow::quad
