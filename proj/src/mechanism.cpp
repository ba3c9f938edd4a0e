#include "cbflow/mechanism.hpp"

#include <cmath>
#include <sstream>

#include "cbflow/quadrature.hpp"

namespace cbflow {

// ===== LeftHalfPoint =====

LeftHalfPoint::LeftHalfPoint(ComplexVec v) : c(std::move(v)) {
  if (c.empty()) throw std::invalid_argument("LeftHalfPoint: empty vector");
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!(c[i].real() <= 0.0) || !std::isfinite(c[i].real()) ||
        !std::isfinite(c[i].imag())) {
      std::ostringstream os;
      os << "LeftHalfPoint: component " << (i + 1) << " = " << c[i].real()
         << (c[i].imag() < 0 ? "" : "+") << c[i].imag()
         << "i lies outside the left half-plane";
      throw std::invalid_argument(os.str());
    }
  }
}

LeftHalfPoint LeftHalfPoint::from_real(const RealVec& r) {
  ComplexVec v(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) v[i] = Complex(r[i], 0.0);
  return LeftHalfPoint(std::move(v));
}

LeftHalfPoint LeftHalfPoint::zero(std::size_t m) {
  return LeftHalfPoint(ComplexVec(m, Complex(0.0, 0.0)));
}

// ===== validation =====

namespace {

void check_levy(const LevyMeasure& levy, std::size_t m, std::size_t i,
                std::vector<Violation>& out) {
  if (const auto* fa = std::get_if<LevyFiniteAtoms>(&levy)) {
    for (std::size_t a = 0; a < fa->atoms.size(); ++a) {
      const LevyAtom& atom = fa->atoms[a];
      if (atom.z.size() != m) {
        out.push_back({i, "dimension mismatch",
                       "atom " + std::to_string(a + 1) + " has wrong length"});
        continue;
      }
      bool finite = std::isfinite(atom.mass);
      bool nonneg = true;
      for (double zj : atom.z) {
        finite = finite && std::isfinite(zj);
        nonneg = nonneg && zj >= 0.0;
      }
      if (!finite) {
        out.push_back({i, "non-finite parameter",
                       "atom " + std::to_string(a + 1)});
        continue;
      }
      if (!nonneg)
        out.push_back({i, "atom outside state space",
                       "atom " + std::to_string(a + 1) + " has a negative component"});
      if (l1_norm(atom.z) == 0.0)
        out.push_back({i, "atom at origin", "atom " + std::to_string(a + 1)});
      if (!(atom.mass > 0.0))
        out.push_back({i, "atom mass nonpositive",
                       "atom " + std::to_string(a + 1) + " mass = " +
                           std::to_string(atom.mass)});
    }
  } else if (const auto* st = std::get_if<LevyAxisStable>(&levy)) {
    if (!std::isfinite(st->alpha) || !std::isfinite(st->scale)) {
      out.push_back({i, "non-finite parameter", "axis-stable parameters"});
      return;
    }
    if (st->axis >= m)
      out.push_back({i, "axis out of range",
                     "axis " + std::to_string(st->axis + 1) + " exceeds dimension " +
                         std::to_string(m)});
    if (!(st->alpha > 0.0 && st->alpha < 2.0))
      out.push_back({i, "stable index out of range",
                     "alpha = " + std::to_string(st->alpha)});
    if (!(st->scale > 0.0))
      out.push_back({i, "stable scale nonpositive",
                     "scale = " + std::to_string(st->scale)});
    // Integrability against (sum_{j != i} z_j + z_i^2) ^ 1: the own axis sees
    // the quadratic weight near 0 (any alpha < 2 integrates); a foreign axis
    // sees the linear weight, so the first moment must converge at 0.
    if (st->axis != i && st->alpha >= 1.0)
      out.push_back({i, "cross-axis first-moment divergence",
                     "axis " + std::to_string(st->axis + 1) + " measure with alpha = " +
                         std::to_string(st->alpha) + " in row " + std::to_string(i + 1)});
  }
}

}  // namespace

ValidationReport validate_mechanism(const BranchingMechanism& mech) {
  ValidationReport rep;
  auto& out = rep.violations;
  if (mech.m == 0) out.push_back({0, "dimension nonpositive", "m = 0"});
  if (mech.rows.size() != mech.m)
    out.push_back({mech.m, "row count mismatch",
                   std::to_string(mech.rows.size()) + " rows for m = " +
                       std::to_string(mech.m)});
  const std::size_t upto = std::min(mech.m, mech.rows.size());
  for (std::size_t i = 0; i < upto; ++i) {
    const MechanismRow& row = mech.rows[i];
    if (row.alpha.size() != mech.m) {
      out.push_back({i, "drift row length mismatch",
                     "row " + std::to_string(i + 1) + " has " +
                         std::to_string(row.alpha.size()) + " entries"});
      continue;
    }
    bool finite = std::isfinite(row.beta);
    for (double a : row.alpha) finite = finite && std::isfinite(a);
    if (!finite) {
      out.push_back({i, "non-finite parameter", "row " + std::to_string(i + 1)});
      continue;
    }
    for (std::size_t j = 0; j < mech.m; ++j) {
      if (j != i && row.alpha[j] < 0.0) {
        std::ostringstream os;
        os << "alpha[" << (i + 1) << "][" << (j + 1) << "] = " << row.alpha[j];
        out.push_back({i, "off-diagonal drift negative", os.str()});
      }
    }
    if (row.beta < 0.0)
      out.push_back({i, "diffusion negative",
                     "beta[" + std::to_string(i + 1) + "] = " +
                         std::to_string(row.beta)});
    check_levy(row.levy, mech.m, i, out);
  }
  rep.pass = out.empty();
  return rep;
}

void require_valid(const BranchingMechanism& mech) {
  const ValidationReport rep = validate_mechanism(mech);
  if (rep.pass) return;
  std::ostringstream os;
  os << "invalid mechanism:";
  const std::size_t shown = std::min<std::size_t>(rep.violations.size(), 3);
  for (std::size_t v = 0; v < shown; ++v) {
    const Violation& viol = rep.violations[v];
    os << " [" << viol.rule << ": " << viol.detail << "]";
  }
  if (rep.violations.size() > shown)
    os << " (+" << (rep.violations.size() - shown) << " more)";
  throw InvalidMechanismError(os.str());
}

// ===== axis-stable integrals =====

namespace detail {

namespace {

// e^z - sum_{n<k} z^n/n! for k in {1, 2}, free of subtractive cancellation
// for small |z| (the raw difference loses |z|^{-k} relative digits there).
Complex exp_rem(Complex z, int k) {
  if (std::abs(z) > 0.5) {
    Complex w = std::exp(z) - 1.0;
    if (k == 2) w -= z;
    return w;
  }
  Complex term(1.0, 0.0);
  for (int n = 1; n <= k; ++n) term *= z / static_cast<double>(n);
  Complex sum = term;
  for (int n = k + 1; n <= 48; ++n) {
    term *= z / static_cast<double>(n);
    sum += term;
    if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

}  // namespace

LevyExpIntegral axis_stable_exp_integral(double alpha, double scale, Complex lam,
                                         bool compensate_unit_band,
                                         const QuadControl& ctl) {
  LevyExpIntegral out;
  if (lam == Complex(0.0, 0.0)) return out;  // integrand vanishes identically

  const double a = alpha;
  const double c = scale;
  const int k = compensate_unit_band ? 2 : 1;
  quad::Options qo;
  qo.rel_tol = ctl.rel_tol;
  qo.abs_tol = 1e-16;

  // --- head (0, delta]: power series of the exponential, integrated termwise;
  // delta shrinks with |lam| so the series stays sharply convergent.
  const double delta = std::min(1e-6, 0.5 / std::abs(lam));
  const Complex ld = lam * delta;
  const double da = std::pow(delta, -a);
  Complex head(0.0, 0.0);
  double head_err;
  {
    Complex p(1.0, 0.0);  // (lam*delta)^n / n!
    for (int n = 1; n <= k; ++n) p *= ld / static_cast<double>(n);
    Complex term = p * (da / (k - a));
    int n = k;
    while (true) {
      head += term;
      if (std::abs(term) <= 1e-17 * (std::abs(head) + 1e-300) || n >= 64) break;
      ++n;
      p *= ld / static_cast<double>(n);
      term = p * (da / (n - a));
    }
    head_err = 2.0 * std::abs(term);
  }

  // --- body [delta, 1]
  auto body_f = [&](double r) {
    return exp_rem(lam * r, k) * std::pow(r, -1.0 - a);
  };
  const quad::Result body = quad::integrate_log(body_f, delta, 1.0, qo);
  out.evaluations += body.evaluations;

  // --- tail (1, inf) of (e^{lam r} - 1) r^{-1-a}.  Quadrature covers a window
  // where the exponential still matters; past it the -1 term is integrated
  // exactly and the e^{lam r} remainder is bounded analytically.  When the
  // oscillation outpaces the decay (|Im| > |Re|, including the boundary
  // Re = 0) the exponential part runs over the rotated contour r0 + i*s,
  // where it decays like e^{-|Im lam| s}.
  Complex tail;
  double tail_err;
  bool tail_conv;
  const double x = -lam.real();
  const double y = lam.imag();
  const bool boundary = x == 0.0;
  auto tail_f = [&](double r) {  // compensation stops at r = 1
    return exp_rem(lam * r, 1) * std::pow(r, -1.0 - a);
  };
  if (y == 0.0 || x >= std::fabs(y)) {
    const double R = 1.0 + 60.0 / x;
    const quad::Result A = quad::integrate_log(tail_f, 1.0, R, qo);
    out.evaluations += A.evaluations;
    tail = A.value - std::pow(R, -a) / a;
    tail_err = A.error + std::exp(-x * R) * std::pow(R, -a) / a;
    tail_conv = A.converged;
  } else {
    const double ay = std::fabs(y);
    const double r0 = std::max(1.0, 1.0 / ay);
    quad::Result A;
    if (r0 > 1.0) {
      A = quad::integrate_log(tail_f, 1.0, r0, qo);
      out.evaluations += A.evaluations;
    }
    const double sgn = y > 0.0 ? 1.0 : -1.0;
    auto rot_f = [&](double s) {
      return std::exp(Complex(-ay * s, -sgn * x * s)) *
             std::pow(Complex(r0, sgn * s), -1.0 - a);
    };
    const quad::Result C = quad::integrate(rot_f, 0.0, 60.0 / ay, qo);
    out.evaluations += C.evaluations;
    tail = A.value + Complex(0.0, sgn) * std::exp(lam * r0) * C.value -
           std::pow(r0, -a) / a;
    tail_err = A.error + C.error + std::pow(r0, -1.0 - a) * std::exp(-60.0) / ay;
    tail_conv = A.converged && C.converged;
  }

  out.value = c * (head + body.value + tail);
  out.error = c * (head_err + body.error + tail_err);
  out.converged = body.converged && tail_conv;
  out.oscillatory = boundary && !out.converged;
  return out;
}

double axis_stable_tilt(double alpha, double scale, const QuadControl& ctl) {
  quad::Options qo;
  qo.rel_tol = ctl.rel_tol;
  qo.abs_tol = 1e-16 * scale;
  // r (1{r<=1} - 1/(1+r^2)) r^{-1-alpha} integrates to
  //   int_0^1 r^{2-alpha}/(1+r^2) dr - int_0^1 s^alpha/(1+s^2) ds
  // after substituting s = 1/r in the outer branch.
  auto inner = [&](double r) {
    return Complex(std::pow(r, 2.0 - alpha) / (1.0 + r * r), 0.0);
  };
  auto outer = [&](double s) {
    return Complex(std::pow(s, alpha) / (1.0 + s * s), 0.0);
  };
  const quad::Result a = quad::integrate(inner, 0.0, 1.0, qo);
  const quad::Result b = quad::integrate(outer, 0.0, 1.0, qo);
  return scale * (a.value.real() - b.value.real());
}

// ===== evaluation core =====

MechanismEvaluation eval_components(const BranchingMechanism& mech,
                                    const ComplexVec& lambda, const QuadControl& ctl,
                                    DriftForm form, bool clamp_re) {
  ComplexVec lam = lambda;
  if (clamp_re) {
    for (Complex& v : lam)
      if (v.real() > 0.0) v = Complex(0.0, v.imag());
  }

  MechanismEvaluation out;
  out.H.assign(mech.m, Complex(0.0, 0.0));
  for (std::size_t i = 0; i < mech.m; ++i) {
    const MechanismRow& row = mech.rows[i];
    Complex h(0.0, 0.0);
    for (std::size_t j = 0; j < mech.m; ++j) h += row.alpha[j] * lam[j];
    h += 0.5 * row.beta * lam[i] * lam[i];

    if (const auto* fa = std::get_if<LevyFiniteAtoms>(&row.levy)) {
      for (const LevyAtom& atom : fa->atoms) {
        Complex dot(0.0, 0.0);
        for (std::size_t j = 0; j < mech.m; ++j) dot += lam[j] * atom.z[j];
        Complex w = std::exp(dot) - 1.0;
        const double n1 = l1_norm(atom.z);
        if (form == DriftForm::Compensated) {
          if (n1 <= 1.0) w -= lam[i] * atom.z[i];
        } else {
          w -= lam[i] * atom.z[i] / (1.0 + n1 * n1);
        }
        h += atom.mass * w;
      }
    } else if (const auto* st = std::get_if<LevyAxisStable>(&row.levy)) {
      const bool own = st->axis == i;
      detail::LevyExpIntegral I = detail::axis_stable_exp_integral(
          st->alpha, st->scale, lam[st->axis], own, ctl);
      if (own && form == DriftForm::Rational)
        I.value += lam[i] * detail::axis_stable_tilt(st->alpha, st->scale, ctl);
      h += I.value;
      out.quad_error = std::max(out.quad_error, I.error);
      out.converged = out.converged && I.converged;
      out.oscillatory = out.oscillatory || I.oscillatory;
    }
    out.H[i] = h;
  }
  return out;
}

}  // namespace detail

MechanismEvaluation eval_mechanism_detailed(const BranchingMechanism& mech,
                                            const LeftHalfPoint& lambda,
                                            const QuadControl& ctl, DriftForm form) {
  require_valid(mech);
  if (lambda.size() != mech.m)
    throw std::invalid_argument("eval_mechanism: lambda dimension mismatch");
  return detail::eval_components(mech, lambda.c, ctl, form, false);
}

ComplexVec eval_mechanism(const BranchingMechanism& mech, const LeftHalfPoint& lambda,
                          const QuadControl& ctl) {
  MechanismEvaluation ev = eval_mechanism_detailed(mech, lambda, ctl);
  if (!ev.converged && !ev.oscillatory) {
    std::ostringstream os;
    os << "mechanism quadrature did not reach tolerance (error estimate "
       << ev.quad_error << ")";
    throw QuadratureError(os.str(), ev.quad_error);
  }
  return ev.H;
}

// ===== conversion and the stable family =====

RealVec convert_a_to_alpha(const RealVec& a_row, const LevyMeasure& levy,
                           std::size_t i, const QuadControl& ctl) {
  RealVec alpha = a_row;
  double shift = 0.0;
  if (const auto* fa = std::get_if<LevyFiniteAtoms>(&levy)) {
    for (const LevyAtom& atom : fa->atoms) {
      if (i >= atom.z.size()) throw std::invalid_argument("convert_a_to_alpha: bad row");
      const double n1 = l1_norm(atom.z);
      const double indicator = n1 <= 1.0 ? 1.0 : 0.0;
      shift += atom.mass * atom.z[i] * (indicator - 1.0 / (1.0 + n1 * n1));
    }
  } else if (const auto* st = std::get_if<LevyAxisStable>(&levy)) {
    if (st->axis == i) shift = detail::axis_stable_tilt(st->alpha, st->scale, ctl);
  }
  if (i >= alpha.size()) throw std::invalid_argument("convert_a_to_alpha: bad row");
  alpha[i] += shift;
  return alpha;
}

BranchingMechanism stable_mechanism(double sigma, double alpha) {
  if (!(sigma > 0.0) || !(alpha > 0.0) || !(alpha <= 1.0))
    throw std::invalid_argument(
        "stable_mechanism: need sigma > 0 and alpha in (0, 1]");
  BranchingMechanism mech;
  mech.m = 1;
  MechanismRow row;
  if (alpha == 1.0) {
    row.alpha = {sigma};
  } else {
    // With c = sigma*alpha/Gamma(1-alpha) the raw jump integral equals
    // -sigma*(-lam)^alpha - c/(1-alpha)*lam; the drift entry cancels the
    // linear term so eval lands on -sigma*(-lam)^alpha exactly.
    const double c = sigma * alpha / std::tgamma(1.0 - alpha);
    row.alpha = {c / (1.0 - alpha)};
    row.levy = LevyAxisStable{0, alpha, c};
  }
  mech.rows.push_back(std::move(row));
  return mech;
}

// ===== tail services =====

TailServices levy_tail_services(const LevyMeasure& levy, std::size_t m, double eps) {
  if (!(eps > 0.0 && eps <= 1.0))
    throw std::invalid_argument("levy_tail_services: eps must lie in (0, 1]");
  TailServices ts;
  ts.eps = eps;
  ts.m = m;
  ts.compensator.assign(m, 0.0);
  ts.second_moment.assign(m, RealVec(m, 0.0));

  if (const auto* fa = std::get_if<LevyFiniteAtoms>(&levy)) {
    TailServices::AtomTable table;
    double cum = 0.0;
    for (const LevyAtom& atom : fa->atoms) {
      const double n1 = l1_norm(atom.z);
      if (n1 > eps) {
        cum += atom.mass;
        table.cumulative.push_back(cum);
        table.jumps.push_back(atom.z);
        if (n1 <= 1.0)
          for (std::size_t k = 0; k < m; ++k)
            ts.compensator[k] += atom.mass * atom.z[k];
      } else {
        for (std::size_t k = 0; k < m; ++k)
          for (std::size_t l = 0; l < m; ++l)
            ts.second_moment[k][l] += atom.mass * atom.z[k] * atom.z[l];
      }
    }
    ts.tail_mass = cum;
    if (!table.jumps.empty()) ts.sampler = std::move(table);
  } else if (const auto* st = std::get_if<LevyAxisStable>(&levy)) {
    const double a = st->alpha;
    const double c = st->scale;
    ts.tail_mass = c * std::pow(eps, -a) / a;
    if (eps < 1.0) {
      ts.compensator[st->axis] =
          a == 1.0 ? c * std::log(1.0 / eps)
                   : c * (1.0 - std::pow(eps, 1.0 - a)) / (1.0 - a);
    }
    ts.second_moment[st->axis][st->axis] = c * std::pow(eps, 2.0 - a) / (2.0 - a);
    ts.sampler = TailServices::PowerTail{st->axis, a};
  }
  return ts;
}

RealVec TailServices::sample_jump(rng::Stream& stream) const {
  if (const auto* table = std::get_if<AtomTable>(&sampler)) {
    const double target = stream.uniform01() * table->cumulative.back();
    std::size_t idx = 0;
    while (idx + 1 < table->cumulative.size() && table->cumulative[idx] <= target)
      ++idx;
    return table->jumps[idx];
  }
  if (const auto* pt = std::get_if<PowerTail>(&sampler)) {
    // Pareto-type inverse transform: P(r > q) = (q/eps)^{-alpha}
    const double u = stream.uniform_pos();
    RealVec z(m, 0.0);
    z[pt->axis] = eps * std::pow(u, -1.0 / pt->alpha);
    return z;
  }
  throw std::domain_error("sample_jump: measure has no tail beyond eps");
}

}  // namespace cbflow
