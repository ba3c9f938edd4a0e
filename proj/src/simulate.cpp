#include "cbflow/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cbflow/parallel.hpp"

namespace cbflow {

namespace {

// Everything that does not depend on the path index, built once per ensemble.
struct SimContext {
  const BranchingMechanism* mech = nullptr;
  double T = 0.0;
  SimConfig cfg;
  std::size_t m = 0;
  std::size_t n_steps = 0;
  double last_step = 0.0;  // length of the final (possibly short) step

  RealMat drift;     // drift[k][i] = rows[i].alpha[k]
  RealVec comp_own;  // own-coordinate band compensator of pi_k
  std::vector<std::size_t> diffusive;  // rows with beta > 0
  std::vector<TailServices> tails;
  bool gaussian_policy = false;
  RealMat chol_scratch_shape;  // m x m zero matrix to copy from
  RealVec levels;              // decade ladder, ends with truncation_n
};

double step_time(const SimContext& ctx, std::size_t j) {
  if (j >= ctx.n_steps) return ctx.T;
  return static_cast<double>(j) * ctx.cfg.dt;
}

SimContext make_context(const BranchingMechanism& mech, const RealVec& x0,
                        double T, const SimConfig& cfg) {
  require_valid(mech);
  if (!(T >= 0.0) || !std::isfinite(T))
    throw std::invalid_argument("simulate: T must be finite and >= 0");
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt))
    throw std::invalid_argument("simulate: dt must be positive");
  if (!(cfg.eps > 0.0) || cfg.eps > 1.0)
    throw std::invalid_argument("simulate: eps must lie in (0, 1]");
  if (!(cfg.truncation_n > 0.0) || !std::isfinite(cfg.truncation_n))
    throw std::invalid_argument("simulate: truncation level must be positive");
  if (x0.size() != mech.m)
    throw std::invalid_argument("simulate: x0 dimension mismatch");
  for (double v : x0)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("simulate: x0 must be componentwise >= 0");
  if (l1_norm(x0) >= cfg.truncation_n)
    throw std::invalid_argument(
        "simulate: truncation level must exceed the initial mass");

  SimContext ctx;
  ctx.mech = &mech;
  ctx.T = T;
  ctx.cfg = cfg;
  ctx.m = mech.m;

  if (ctx.cfg.record_grid.empty())
    ctx.cfg.record_grid = T > 0.0 ? RealVec{0.0, T} : RealVec{0.0};
  const RealVec& grid = ctx.cfg.record_grid;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!(grid[j] >= 0.0) || grid[j] > T + 1e-9 * (1.0 + T))
      throw std::invalid_argument("simulate: record times must lie in [0, T]");
    if (j > 0 && !(grid[j] > grid[j - 1]))
      throw std::invalid_argument("simulate: record times must increase");
  }

  const double ratio = T / cfg.dt;
  ctx.n_steps = static_cast<std::size_t>(std::ceil(ratio - 1e-9));
  ctx.last_step = T - static_cast<double>(ctx.n_steps - 1) * cfg.dt;
  if (ctx.n_steps == 0) ctx.last_step = 0.0;

  ctx.drift.assign(ctx.m, RealVec(ctx.m, 0.0));
  for (std::size_t i = 0; i < ctx.m; ++i)
    for (std::size_t k = 0; k < ctx.m; ++k)
      ctx.drift[k][i] = mech.rows[i].alpha[k];

  ctx.comp_own.assign(ctx.m, 0.0);
  for (std::size_t k = 0; k < ctx.m; ++k) {
    if (mech.rows[k].beta > 0.0) ctx.diffusive.push_back(k);
    ctx.tails.push_back(levy_tail_services(mech.rows[k].levy, ctx.m, cfg.eps));
    if (!std::isfinite(ctx.tails.back().tail_mass))
      throw std::invalid_argument("simulate: tail mass at eps is not finite");
    ctx.comp_own[k] = ctx.tails.back().compensator[k];
  }

  ctx.gaussian_policy =
      cfg.small_jump_policy == SmallJumpPolicy::GaussianCorrection;
  ctx.chol_scratch_shape.assign(ctx.m, RealVec(ctx.m, 0.0));

  for (double lvl = 1.0; lvl < cfg.truncation_n; lvl *= 10.0)
    ctx.levels.push_back(lvl);
  ctx.levels.push_back(cfg.truncation_n);
  return ctx;
}

// Lower-triangular factor of a small symmetric PSD matrix; roundoff-negative
// pivots clamp to zero so near-singular covariances stay usable.
void cholesky_clamped(RealMat& a) {
  const std::size_t m = a.size();
  for (std::size_t j = 0; j < m; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    a[j][j] = d > 0.0 ? std::sqrt(d) : 0.0;
    for (std::size_t i = j + 1; i < m; ++i) {
      double v = a[i][j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i][k] * a[j][k];
      a[i][j] = a[j][j] > 0.0 ? v / a[j][j] : 0.0;
    }
    for (std::size_t i = 0; i < j; ++i) a[i][j] = 0.0;
  }
}

SamplePath run_path(const SimContext& ctx, const RealVec& x0,
                    std::uint64_t path_index) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t m = ctx.m;
  rng::Stream stream = rng::path_stream(ctx.cfg.master_seed, path_index);

  SamplePath path;
  path.times.reserve(ctx.cfg.record_grid.size());
  path.states.reserve(ctx.cfg.record_grid.size());

  RealVec x = x0;
  RealVec pre(m), gauss(m);
  RealMat cov;
  bool dead = false;
  std::size_t rec = 0, lvl = 0;

  auto check_levels = [&](double t) {
    const double mass = l1_norm(x);
    while (lvl < ctx.levels.size() && mass >= ctx.levels[lvl]) {
      path.level_hits.push_back({ctx.levels[lvl], t});
      if (ctx.levels[lvl] == ctx.cfg.truncation_n) {
        dead = true;
        path.lifetime = t;
      }
      ++lvl;
    }
  };
  auto record_until = [&](double bound) {
    while (rec < ctx.cfg.record_grid.size() &&
           ctx.cfg.record_grid[rec] < bound) {
      const double at = ctx.cfg.record_grid[rec];
      path.times.push_back(at);
      // a record time inside the step tolerance can sit just below the
      // lifetime; it gets the finite death-step state so that alive(j)
      // always pairs with a finite visited row
      path.states.push_back(dead && at >= path.lifetime ? RealVec(m, inf) : x);
      ++rec;
    }
  };

  check_levels(0.0);
  for (std::size_t j = 0; j < ctx.n_steps && !dead; ++j) {
    const double t_next = step_time(ctx, j + 1);
    record_until(t_next - 1e-9 * (1.0 + t_next));
    const double h = j + 1 == ctx.n_steps ? ctx.last_step : ctx.cfg.dt;

    pre = x;
    // linear drift less the band compensator; sampled jumps in (eps, 1] are
    // compensated in their own coordinate only
    for (std::size_t k = 0; k < m; ++k) {
      double dx = -pre[k] * ctx.comp_own[k];
      for (std::size_t i = 0; i < m; ++i) dx += ctx.drift[k][i] * pre[i];
      x[k] = std::max(0.0, pre[k] + h * dx);
    }
    // square-root diffusion, one draw per diffusive coordinate
    for (std::size_t k : ctx.diffusive) {
      const double g = stream.gaussian();
      x[k] = std::max(0.0, x[k] + std::sqrt(ctx.mech->rows[k].beta * x[k] * h) * g);
    }
    // jumps above eps, rate from the pre-step state
    for (std::size_t i = 0; i < m; ++i) {
      const TailServices& tail = ctx.tails[i];
      if (tail.tail_mass <= 0.0) continue;
      const std::uint64_t n_jumps = stream.poisson(h * pre[i] * tail.tail_mass);
      for (std::uint64_t e = 0; e < n_jumps; ++e) {
        const RealVec z = tail.sample_jump(stream);
        for (std::size_t k = 0; k < m; ++k)
          x[k] += std::min(z[k], ctx.cfg.truncation_n);
      }
    }
    // optional small-jump correction: Gaussian with the dropped second moment
    if (ctx.gaussian_policy) {
      cov = ctx.chol_scratch_shape;
      for (std::size_t i = 0; i < m; ++i) {
        if (pre[i] == 0.0) continue;
        const RealMat& sm = ctx.tails[i].second_moment;
        for (std::size_t a = 0; a < m; ++a)
          for (std::size_t b = 0; b < m; ++b) cov[a][b] += h * pre[i] * sm[a][b];
      }
      cholesky_clamped(cov);
      for (std::size_t k = 0; k < m; ++k) gauss[k] = stream.gaussian();
      for (std::size_t k = 0; k < m; ++k) {
        double dx = 0.0;
        for (std::size_t i = 0; i <= k; ++i) dx += cov[k][i] * gauss[i];
        x[k] = std::max(0.0, x[k] + dx);
      }
    }
    check_levels(t_next);
  }
  record_until(ctx.T + 1e-9 * (1.0 + ctx.T) + 1.0);
  return path;
}

}  // namespace

SamplePath simulate_path(const BranchingMechanism& mech, const RealVec& x0,
                         double T, const SimConfig& config,
                         std::uint64_t path_index) {
  return run_path(make_context(mech, x0, T, config), x0, path_index);
}

std::vector<SamplePath> simulate_ensemble(const BranchingMechanism& mech,
                                          const RealVec& x0, double T,
                                          const SimConfig& config,
                                          std::size_t n_paths, int threads) {
  if (n_paths == 0) throw std::invalid_argument("simulate: need n_paths >= 1");
  const SimContext ctx = make_context(mech, x0, T, config);
  std::vector<SamplePath> out(n_paths);
  parallel_for_indexed(n_paths, resolve_thread_count(threads),
                       [&](std::size_t i) { out[i] = run_path(ctx, x0, i); });
  return out;
}

void simulate_fold(
    const BranchingMechanism& mech, const RealVec& x0, double T,
    const SimConfig& config, std::size_t n_paths,
    const std::function<void(std::size_t, const SamplePath&)>& fold,
    int threads, std::uint64_t first_index) {
  if (n_paths == 0) throw std::invalid_argument("simulate: need n_paths >= 1");
  const SimContext ctx = make_context(mech, x0, T, config);
  const int workers = resolve_thread_count(threads);
  const std::size_t block = 256;
  std::vector<SamplePath> buf;
  for (std::size_t start = 0; start < n_paths; start += block) {
    const std::size_t len = std::min(block, n_paths - start);
    buf.assign(len, SamplePath{});
    parallel_for_indexed(len, workers, [&](std::size_t i) {
      buf[i] = run_path(ctx, x0, first_index + start + i);
    });
    for (std::size_t i = 0; i < len; ++i)
      fold(first_index + start + i, buf[i]);
  }
}

}  // namespace cbflow
