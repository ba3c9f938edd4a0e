#include "cbflow/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace cbflow::rng {

double Stream::gaussian() {
  const double u1 = uniform_pos();
  const double u2 = uniform01();
  constexpr double two_pi = 6.283185307179586476925287;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

namespace {

long long poisson_knuth(Stream& s, double mean) {
  const double limit = std::exp(-mean);
  long long k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= s.uniform_pos();
  } while (p > limit);
  return k - 1;
}

// Transformed rejection with squeeze (Hormann's PTRS); two uniforms per
// attempt, acceptance probability near 1 for mean >= 10.
long long poisson_ptrs(Stream& s, double mean) {
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = s.uniform01() - 0.5;
    double v = s.uniform01();
    const double us = 0.5 - std::fabs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<long long>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    int sign = 0;
    const double lhs = std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b);
    const double rhs = kf * loglam - mean - ::lgamma_r(kf + 1.0, &sign);
    if (lhs <= rhs) return static_cast<long long>(kf);
  }
}

}  // namespace

long long Stream::poisson(double mean) {
  if (!(mean >= 0.0)) throw std::invalid_argument("poisson: mean must be >= 0");
  if (mean == 0.0) return 0;
  if (mean < 10.0) return poisson_knuth(*this, mean);
  return poisson_ptrs(*this, mean);
}

}  // namespace cbflow::rng
