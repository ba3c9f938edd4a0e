#pragma once
// Shared scalar/vector aliases for the branching-process kernel.

#include <complex>
#include <cstddef>
#include <vector>

namespace cbflow {

using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;
using RealVec = std::vector<double>;
using RealMat = std::vector<RealVec>;   // row-major, rectangular

// The state space D = [0,inf)^m carries the l1 norm |x| = sum_k |x_k|
// throughout (jump-size cutoffs, explosion levels, truncation).
inline double l1_norm(const RealVec& x) {
  double s = 0.0;
  for (double v : x) s += (v < 0.0 ? -v : v);
  return s;
}

inline double l1_norm(const ComplexVec& x) {
  double s = 0.0;
  for (const Complex& v : x) s += std::abs(v);
  return s;
}

inline RealVec uniform_grid(double T, std::size_t n_points) {
  RealVec g(n_points);
  for (std::size_t j = 0; j < n_points; ++j)
    g[j] = T * static_cast<double>(j) / static_cast<double>(n_points - 1);
  g.back() = T;
  return g;
}

}  // namespace cbflow
