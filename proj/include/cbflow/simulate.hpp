#pragma once

// Pathwise simulation of the branching process from its stochastic system:
// linear drift, square-root diffusion, and state-dependent compensated jumps,
// advanced by fixed-step Euler splitting.  Jumps larger than the truncation
// threshold are capped componentwise and crossing the threshold in total mass
// kills the path (cemetery state, lifetime recorded).

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "cbflow/mechanism.hpp"
#include "cbflow/rng.hpp"
#include "cbflow/types.hpp"

namespace cbflow {

enum class SmallJumpPolicy {
  DriftOnly,           // dropped sub-eps jumps leave only their compensator
  GaussianCorrection,  // add a Gaussian matching their second moment
};

struct SimConfig {
  double dt = 1e-3;
  double eps = 1e-2;          // small-jump cutoff, in (0, 1]
  double truncation_n = 1e6;  // explosion threshold on |xi|, l1
  SmallJumpPolicy small_jump_policy = SmallJumpPolicy::DriftOnly;
  std::uint64_t master_seed = 0;
  RealVec record_grid;  // output times in [0, T]; empty means {0, T}
};

struct LevelHit {
  double level = 0.0;
  double time = 0.0;  // first step time with |xi| >= level
};

struct SamplePath {
  RealVec times;
  RealMat states;  // componentwise >= 0 while alive, all +inf afterwards
  double lifetime = std::numeric_limits<double>::infinity();
  std::vector<LevelHit> level_hits;  // decade ladder up to the truncation level

  bool alive(std::size_t j) const { return times[j] < lifetime; }
};

// One path, driven by the substream for path_index.  States are recorded at
// config.record_grid by the last step time <= the requested time, so recorded
// pre-lifetime states are always states the path actually visited.
SamplePath simulate_path(const BranchingMechanism& mech, const RealVec& x0,
                         double T, const SimConfig& config,
                         std::uint64_t path_index);

// Paths 0..n_paths-1.  Bit-identical for fixed arguments regardless of the
// worker count (threads = 0 defers to CB_THREADS, then hardware).
std::vector<SamplePath> simulate_ensemble(const BranchingMechanism& mech,
                                          const RealVec& x0, double T,
                                          const SimConfig& config,
                                          std::size_t n_paths, int threads = 0);

// Streaming ensemble: paths are generated in fixed-size blocks (parallel
// inside a block) and handed to fold in strict path-index order, so memory
// stays bounded and reductions are scheduler-independent.  Indices run from
// first_index to first_index + n_paths - 1, so disjoint ranges use disjoint
// substreams of the same master seed.
void simulate_fold(
    const BranchingMechanism& mech, const RealVec& x0, double T,
    const SimConfig& config, std::size_t n_paths,
    const std::function<void(std::size_t, const SamplePath&)>& fold,
    int threads = 0, std::uint64_t first_index = 0);

}  // namespace cbflow
