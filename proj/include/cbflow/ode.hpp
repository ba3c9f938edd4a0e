#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cbflow/types.hpp"

namespace cbflow::ode {

// Explicit Dormand-Prince 5(4) with FSAL and PI step-size control.  The
// solver lands exactly on every requested grid point, so callers never need
// dense output.  A post-accept hook can project the state back into its
// admissible set or abort the integration.

enum class FailureKind { StepUnderflow, MaxSteps, NonFiniteState, DomainEscape };

struct Failure {
  FailureKind kind;
  double time = 0.0;
  std::string detail;
};

struct Options {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double initial_step = 0.0;  // 0 selects automatically
  std::size_t max_steps = 2000000;
};

struct Stats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_calls = 0;
  double max_error = 0.0;  // largest accepted scaled local error estimate
};

struct HookResult {
  bool changed = false;  // set when the hook mutated the state
  std::optional<Failure> failure;
};

using Rhs = std::function<void(double, const ComplexVec&, ComplexVec&)>;
using PostAccept = std::function<HookResult(double, ComplexVec&)>;

// Values at the grid points actually reached; on failure both t and y are
// truncated after the last completed grid point and `failure` is set.
struct Solution {
  std::vector<double> t;
  std::vector<ComplexVec> y;
  Stats stats;
  std::optional<Failure> failure;
};

Solution solve(const Rhs& rhs, const ComplexVec& y0, const std::vector<double>& grid,
               const Options& opt = {}, const PostAccept& post_accept = nullptr);

}  // namespace cbflow::ode
