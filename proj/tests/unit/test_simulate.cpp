#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cbflow/simulate.hpp"
#include "support/random_mech.hpp"

using namespace cbflow;

namespace {

BranchingMechanism feller() {
  BranchingMechanism mech;
  mech.m = 1;
  mech.rows.resize(1);
  mech.rows[0].alpha = {0.0};
  mech.rows[0].beta = 2.0;
  return mech;
}

BranchingMechanism linear_two_type() {
  BranchingMechanism mech;
  mech.m = 2;
  mech.rows.resize(2);
  mech.rows[0].alpha = {-1.0, 0.5};
  mech.rows[1].alpha = {0.3, -2.0};
  return mech;
}

}  // namespace

TEST_CASE("noise-free paths follow the linear flow at first order") {
  const auto mech = linear_two_type();
  SimConfig cfg;
  cfg.record_grid = {0.0, 0.5, 1.0};
  const RealVec x0{1.0, 2.0};
  const double ref_half[2] = {0.7603356895068255, 0.8722950174367787};
  const double ref_one[2] = {0.5314001489320795, 0.41937447522729954};

  const auto path = simulate_path(mech, x0, 1.0, cfg, 0);
  double err = 0.0;
  for (int k = 0; k < 2; ++k) {
    err = std::max(err, std::fabs(path.states[2][k] - ref_one[k]));
    CHECK(std::fabs(path.states[1][k] - ref_half[k]) <= 2e-3);
    CHECK(std::fabs(path.states[2][k] - ref_one[k]) <= 2e-3);
  }

  SUBCASE("halving dt halves the discretization error") {
    cfg.dt = 5e-4;
    const auto fine = simulate_path(mech, x0, 1.0, cfg, 0);
    double err2 = 0.0;
    for (int k = 0; k < 2; ++k)
      err2 = std::max(err2, std::fabs(fine.states[2][k] - ref_one[k]));
    CHECK(err2 <= 0.6 * err);
    CHECK(err2 >= 0.4 * err);
  }
  SUBCASE("no randomness is consumed") {
    cfg.master_seed = 0xDEADBEEF;
    const auto other = simulate_path(mech, x0, 1.0, cfg, 17);
    for (std::size_t j = 0; j < path.times.size(); ++j)
      for (int k = 0; k < 2; ++k) CHECK(other.states[j][k] == path.states[j][k]);
  }
}

TEST_CASE("zero start is absorbing") {
  auto mech = feller();
  mech.rows[0].alpha = {0.5};
  LevyFiniteAtoms fa;
  fa.atoms.push_back({RealVec{0.3}, 1.0});
  mech.rows[0].levy = fa;
  SimConfig cfg;
  cfg.record_grid = {0.0, 0.5, 1.0};
  const auto path = simulate_path(mech, {0.0}, 1.0, cfg, 3);
  for (std::size_t j = 0; j < path.times.size(); ++j) {
    CHECK(path.alive(j));
    CHECK(path.states[j][0] == 0.0);
  }
}

TEST_CASE("square-root diffusion keeps its martingale mean") {
  SimConfig cfg;
  cfg.master_seed = 2024;
  cfg.record_grid = {0.0, 1.0};
  const std::size_t n = 10000;
  double sum = 0.0, sumsq = 0.0;
  simulate_fold(feller(), {1.0}, 1.0, cfg, n,
                [&](std::size_t, const SamplePath& p) {
                  const double v = p.alive(1) ? p.states[1][0] : 0.0;
                  sum += v;
                  sumsq += v * v;
                });
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  CHECK(std::fabs(mean - 1.0) <= 4.0 * se);
}

TEST_CASE("halving dt moves the exponential statistic within its noise band") {
  SimConfig cfg;
  cfg.master_seed = 2024;
  cfg.record_grid = {0.0, 1.0};
  const std::size_t n = 10000;
  double est[2], se[2];
  const double dts[2] = {1e-3, 5e-4};
  for (int c = 0; c < 2; ++c) {
    cfg.dt = dts[c];
    double s = 0.0, ss = 0.0;
    simulate_fold(feller(), {1.0}, 1.0, cfg, n,
                  [&](std::size_t, const SamplePath& p) {
                    const double v = p.alive(1) ? std::exp(-p.states[1][0]) : 0.0;
                    s += v;
                    ss += v * v;
                  });
    est[c] = s / n;
    se[c] = std::sqrt((ss / n - est[c] * est[c]) / n);
  }
  CHECK(std::fabs(est[0] - est[1]) <=
        3.0 * std::sqrt(se[0] * se[0] + se[1] * se[1]));
}

TEST_CASE("explosion is resolved on the step grid with a decade ladder") {
  BranchingMechanism mech;
  mech.m = 1;
  mech.rows.resize(1);
  mech.rows[0].alpha = {3.0};  // deterministic growth 1e5 * exp(3t)
  SimConfig cfg;
  cfg.record_grid = {0.0, 0.5, 0.769, 0.9, 1.0};
  const auto path = simulate_path(mech, {1e5}, 1.0, cfg, 0);

  CHECK(std::fabs(path.lifetime - 0.769) <= 1e-12);
  REQUIRE(path.level_hits.size() == 7);  // 1, 10, ..., 1e5 at t=0, then 1e6
  for (std::size_t l = 0; l + 1 < path.level_hits.size(); ++l) {
    CHECK(path.level_hits[l].level < path.level_hits[l + 1].level);
    CHECK(path.level_hits[l].time <= path.level_hits[l + 1].time);
  }
  CHECK(path.level_hits[5].level == 1e5);
  CHECK(path.level_hits[5].time == 0.0);
  CHECK(path.level_hits[6].level == 1e6);
  CHECK(path.level_hits[6].time == path.lifetime);

  for (std::size_t j = 0; j < path.times.size(); ++j) {
    if (path.times[j] < path.lifetime) {
      CHECK(path.alive(j));
      CHECK(path.states[j][0] < 1e6);
    } else {
      CHECK_FALSE(path.alive(j));
      CHECK(std::isinf(path.states[j][0]));
    }
  }
  CHECK_FALSE(path.alive(2));  // t = 0.769 is the lifetime itself
}

TEST_CASE("small-jump policies differ exactly as specified") {
  // Single atom strictly below the cutoff: no tail jumps remain, so the
  // drift-only path is constant and the correction policy adds a Gaussian
  // with variance dt * xi * mass * z^2 per step.
  BranchingMechanism mech;
  mech.m = 1;
  mech.rows.resize(1);
  mech.rows[0].alpha = {0.0};
  LevyFiniteAtoms fa;
  fa.atoms.push_back({RealVec{0.05}, 2.0});
  mech.rows[0].levy = fa;

  SimConfig cfg;
  cfg.eps = 0.1;
  cfg.master_seed = 5;
  cfg.record_grid = {0.0, 1e-3};

  const auto plain = simulate_path(mech, {1.0}, 1e-3, cfg, 0);
  CHECK(plain.states[1][0] == 1.0);

  cfg.small_jump_policy = SmallJumpPolicy::GaussianCorrection;
  const std::size_t n = 40000;
  double s = 0.0, ss = 0.0;
  simulate_fold(mech, {1.0}, 1e-3, cfg, n,
                [&](std::size_t, const SamplePath& p) {
                  s += p.states[1][0];
                  ss += p.states[1][0] * p.states[1][0];
                });
  const double mean = s / n;
  const double var = ss / n - mean * mean;
  const double want = 1e-3 * 2.0 * 0.05 * 0.05;
  CHECK(std::fabs(mean - 1.0) <= 4.0 * std::sqrt(var / n));
  CHECK(var == doctest::Approx(want).epsilon(0.1));
}

TEST_CASE("ensembles are deterministic and streams are disjoint") {
  const auto mech = testing::random_finite_atoms_mechanism(4);
  const RealVec x0(mech.m, 0.8);
  SimConfig cfg;
  cfg.master_seed = 11;
  cfg.record_grid = uniform_grid(0.5, 6);

  const auto ens = simulate_ensemble(mech, x0, 0.5, cfg, 40);
  SUBCASE("same arguments, same bits") {
    const auto again = simulate_ensemble(mech, x0, 0.5, cfg, 40);
    for (std::size_t i = 0; i < ens.size(); ++i)
      for (std::size_t j = 0; j < ens[i].times.size(); ++j)
        for (std::size_t k = 0; k < mech.m; ++k)
          CHECK(again[i].states[j][k] == ens[i].states[j][k]);
  }
  SUBCASE("a single path reproduces ensemble entry zero") {
    const auto single = simulate_path(mech, x0, 0.5, cfg, 0);
    for (std::size_t j = 0; j < single.times.size(); ++j)
      for (std::size_t k = 0; k < mech.m; ++k)
        CHECK(single.states[j][k] == ens[0].states[j][k]);
  }
  SUBCASE("fold visits paths in index order and matches the ensemble") {
    std::vector<std::size_t> order;
    simulate_fold(mech, x0, 0.5, cfg, 40,
                  [&](std::size_t i, const SamplePath& p) {
                    order.push_back(i);
                    for (std::size_t j = 0; j < p.times.size(); ++j)
                      for (std::size_t k = 0; k < mech.m; ++k)
                        CHECK(p.states[j][k] == ens[i].states[j][k]);
                  });
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(order[i] == i);
  }
  SUBCASE("distinct indices give distinct first draws") {
    RealVec first;
    for (std::uint64_t i = 0; i < 1000; ++i)
      first.push_back(rng::path_stream(cfg.master_seed, i).gaussian());
    std::sort(first.begin(), first.end());
    CHECK(std::adjacent_find(first.begin(), first.end()) == first.end());
  }
}

TEST_CASE("recorded states are visited states, never interpolations") {
  const auto mech = linear_two_type();
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.record_grid = {0.0, 0.25, 0.5};
  const auto snapped = simulate_path(mech, {1.0, 2.0}, 0.5, cfg, 0);
  cfg.record_grid = {0.0, 0.2, 0.5};
  const auto aligned = simulate_path(mech, {1.0, 2.0}, 0.5, cfg, 0);
  for (std::size_t k = 0; k < 2; ++k)
    CHECK(snapped.states[1][k] == aligned.states[1][k]);
}

TEST_CASE("paths with jumps stay in the state space") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto mech = testing::random_finite_atoms_mechanism(seed);
    SimConfig cfg;
    cfg.master_seed = seed;
    cfg.record_grid = uniform_grid(1.0, 9);
    const auto ens = simulate_ensemble(mech, RealVec(mech.m, 1.0), 1.0, cfg, 30);
    for (const auto& p : ens) {
      bool seen_dead = false;
      for (std::size_t j = 0; j < p.times.size(); ++j) {
        if (p.alive(j)) {
          CHECK_FALSE(seen_dead);  // cemetery is absorbing
          for (double v : p.states[j]) {
            CHECK(v >= 0.0);
            CHECK(std::isfinite(v));
          }
        } else {
          seen_dead = true;
          for (double v : p.states[j]) CHECK(std::isinf(v));
        }
      }
    }
  }
}

TEST_CASE("simulation argument validation") {
  const auto mech = feller();
  SimConfig cfg;
  auto run = [&](const RealVec& x0, double T, const SimConfig& c) {
    return simulate_path(mech, x0, T, c, 0);
  };
  CHECK_NOTHROW(run({1.0}, 1.0, cfg));

  SimConfig bad = cfg;
  bad.dt = 0.0;
  CHECK_THROWS_AS(run({1.0}, 1.0, bad), std::invalid_argument);
  bad = cfg;
  bad.eps = 0.0;
  CHECK_THROWS_AS(run({1.0}, 1.0, bad), std::invalid_argument);
  bad = cfg;
  bad.eps = 1.5;
  CHECK_THROWS_AS(run({1.0}, 1.0, bad), std::invalid_argument);
  bad = cfg;
  bad.truncation_n = 0.5;  // below the initial mass
  CHECK_THROWS_AS(run({1.0}, 1.0, bad), std::invalid_argument);
  bad = cfg;
  bad.record_grid = {0.0, 2.0};
  CHECK_THROWS_AS(run({1.0}, 1.0, bad), std::invalid_argument);
  bad = cfg;
  bad.record_grid = {0.5, 0.25};
  CHECK_THROWS_AS(run({1.0}, 1.0, bad), std::invalid_argument);

  CHECK_THROWS_AS(run({-1.0}, 1.0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(run({1.0, 1.0}, 1.0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(run({1.0}, -1.0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(simulate_ensemble(mech, {1.0}, 1.0, cfg, 0),
                  std::invalid_argument);
}
