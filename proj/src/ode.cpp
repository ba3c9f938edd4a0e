#include "cbflow/ode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cbflow::ode {

namespace {

// Dormand-Prince tableau.  The 5th-order weights coincide with the last
// stage row (FSAL); kErr holds b - bhat for the embedded 4th-order error.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA2[1] = {1.0 / 5};
constexpr double kA3[2] = {3.0 / 40, 9.0 / 40};
constexpr double kA4[3] = {44.0 / 45, -56.0 / 15, 32.0 / 9};
constexpr double kA5[4] = {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561,
                           -212.0 / 729};
constexpr double kA6[5] = {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
                           -5103.0 / 18656};
constexpr double kB[6] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192,
                          -2187.0 / 6784, 11.0 / 84};
constexpr double kErr[7] = {71.0 / 57600,     0.0,        -71.0 / 16695, 71.0 / 1920,
                            -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

bool all_finite(const ComplexVec& v) {
  for (const Complex& x : v)
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
  return true;
}

double initial_step_guess(const Rhs& rhs, double t0, const ComplexVec& y0,
                          const ComplexVec& f0, double span, const Options& opt,
                          Stats& stats) {
  const std::size_t n = y0.size();
  double d0 = 0.0, d1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sc = opt.abs_tol + opt.rel_tol * std::abs(y0[i]);
    d0 += std::norm(y0[i]) / (sc * sc);
    d1 += std::norm(f0[i]) / (sc * sc);
  }
  double h = (d0 < 1e-10 || d1 < 1e-10) ? 1e-6 : 0.01 * std::sqrt(d0 / d1);
  h = std::min(h, span);

  ComplexVec y1(n), f1(n);
  for (std::size_t i = 0; i < n; ++i) y1[i] = y0[i] + h * f0[i];
  rhs(t0 + h, y1, f1);
  ++stats.rhs_calls;
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sc = opt.abs_tol + opt.rel_tol * std::abs(y0[i]);
    d2 += std::norm(f1[i] - f0[i]) / (sc * sc);
  }
  d2 = std::sqrt(d2) / h;
  const double dm = std::max(std::sqrt(d1), d2);
  const double h1 = dm <= 1e-15 ? std::max(1e-6, h * 1e-3)
                                : std::pow(0.01 / dm, 1.0 / 5.0);
  return std::min({100.0 * h, h1, span});
}

}  // namespace

Solution solve(const Rhs& rhs, const ComplexVec& y0, const std::vector<double>& grid,
               const Options& opt, const PostAccept& post_accept) {
  if (grid.empty()) throw std::invalid_argument("ode::solve: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw std::invalid_argument("ode::solve: grid must increase strictly");

  Solution sol;
  sol.t.push_back(grid[0]);
  sol.y.push_back(y0);
  if (grid.size() == 1) return sol;

  const std::size_t n = y0.size();
  const double safe = 0.9, beta = 0.04;
  const double expo1 = 0.2 - 0.75 * beta;
  const double facc1 = 5.0, facc2 = 0.1;  // clamp on h / h_new

  double t = grid[0];
  ComplexVec y = y0;
  ComplexVec k[7];
  for (auto& k_i : k) k_i.assign(n, Complex(0.0, 0.0));
  ComplexVec ytmp(n), ynew(n);

  rhs(t, y, k[0]);
  ++sol.stats.rhs_calls;
  if (!all_finite(k[0])) {
    sol.failure = Failure{FailureKind::NonFiniteState, t,
                          "right-hand side not finite at the initial point"};
    return sol;
  }

  const double span = grid.back() - grid.front();
  double h = opt.initial_step > 0.0
                 ? std::min(opt.initial_step, span)
                 : initial_step_guess(rhs, t, y, k[0], span, opt, sol.stats);
  double facold = 1e-4;
  std::size_t next = 1;
  std::size_t steps = 0;

  while (next < grid.size()) {
    if (++steps > opt.max_steps) {
      sol.failure = Failure{FailureKind::MaxSteps, t, "step budget exhausted"};
      return sol;
    }
    if (h < 1e-14 * std::max(1.0, std::fabs(t))) {
      sol.failure = Failure{FailureKind::StepUnderflow, t, "step size underflow"};
      return sol;
    }
    bool hit = false;
    if (t + h >= grid[next]) {
      h = grid[next] - t;
      hit = true;
    }

    // stages 2..6
    for (int s = 1; s < 6; ++s) {
      const double* a = s == 1 ? kA2 : s == 2 ? kA3 : s == 3 ? kA4 : s == 4 ? kA5 : kA6;
      for (std::size_t i = 0; i < n; ++i) {
        Complex acc = y[i];
        for (int j = 0; j < s; ++j) acc += h * a[j] * k[j][i];
        ytmp[i] = acc;
      }
      rhs(t + kC[s] * h, ytmp, k[s]);
      ++sol.stats.rhs_calls;
    }
    for (std::size_t i = 0; i < n; ++i) {
      Complex acc = y[i];
      for (int j = 0; j < 6; ++j) acc += h * kB[j] * k[j][i];
      ynew[i] = acc;
    }
    rhs(t + h, ynew, k[6]);  // FSAL stage
    ++sol.stats.rhs_calls;

    double err = 0.0;
    bool finite = all_finite(ynew);
    for (int j = 0; finite && j < 7; ++j) finite = all_finite(k[j]);
    if (finite) {
      for (std::size_t i = 0; i < n; ++i) {
        Complex e(0.0, 0.0);
        for (int j = 0; j < 7; ++j) e += kErr[j] * k[j][i];
        const double sc =
            opt.abs_tol + opt.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
        err += std::norm(h * e) / (sc * sc);
      }
      err = std::sqrt(err / static_cast<double>(n));
    } else {
      err = 1e10;  // force rejection and shrink until finite again
    }

    const double fac11 = std::pow(err, expo1);
    if (err <= 1.0) {
      // accepted
      facold = std::max(err, 1e-4);
      double fac = fac11 / std::pow(facold, beta);
      fac = std::max(facc2, std::min(facc1, fac / safe));
      const double hnew = h / fac;

      t = hit ? grid[next] : t + h;
      y = ynew;
      std::swap(k[0], k[6]);
      ++sol.stats.accepted;
      sol.stats.max_error = std::max(sol.stats.max_error, err);

      if (post_accept) {
        HookResult hr = post_accept(t, y);
        if (hr.failure) {
          sol.failure = std::move(hr.failure);
          return sol;
        }
        if (hr.changed) {
          rhs(t, y, k[0]);  // FSAL derivative is stale after projection
          ++sol.stats.rhs_calls;
        }
      }
      if (hit) {
        sol.t.push_back(t);
        sol.y.push_back(y);
        ++next;
      }
      h = hnew;
    } else {
      h /= std::min(facc1, fac11 / safe);
      ++sol.stats.rejected;
    }
  }
  return sol;
}

}  // namespace cbflow::ode
