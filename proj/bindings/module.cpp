// Python bindings for the core operations: mechanism construction and
// validation, cumulant flows, minimal solutions, Laplace transforms,
// path simulation, and the Monte Carlo verification statistics.

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "cbflow/cumulant.hpp"
#include "cbflow/io.hpp"
#include "cbflow/mechanism.hpp"
#include "cbflow/simulate.hpp"
#include "cbflow/verify.hpp"

namespace py = pybind11;
using namespace cbflow;

namespace {

SimConfig make_config(double dt, double eps, double truncation_n,
                      const std::string& policy, std::uint64_t seed,
                      const RealVec& record_grid) {
  SimConfig cfg;
  cfg.dt = dt;
  cfg.eps = eps;
  cfg.truncation_n = truncation_n;
  if (policy == "drift")
    cfg.small_jump_policy = SmallJumpPolicy::DriftOnly;
  else if (policy == "gauss")
    cfg.small_jump_policy = SmallJumpPolicy::GaussianCorrection;
  else
    throw std::invalid_argument("policy must be 'drift' or 'gauss'");
  cfg.master_seed = seed;
  cfg.record_grid = record_grid;
  return cfg;
}

py::dict flow_dict(const CumulantFlow& flow) {
  py::dict d;
  d["times"] = flow.times;
  d["values"] = flow.values;
  d["complete"] = flow.complete();
  return d;
}

py::dict report_dict(const VerificationReport& r) {
  py::dict meta;
  meta["t"] = r.meta.t;
  meta["lambda"] = r.meta.lambda;
  meta["x0"] = r.meta.x0;
  meta["config_digest"] = r.meta.config_digest;
  py::dict d;
  d["statistic"] = r.statistic;
  d["estimate"] = r.estimate;
  d["reference"] = r.reference;
  d["std_error"] = r.std_error;
  d["n_paths"] = r.n_paths;
  d["k"] = r.k;
  d["pass"] = r.pass;
  d["meta"] = meta;
  return d;
}

py::list report_list(const std::vector<VerificationReport>& reps) {
  py::list out;
  for (const auto& r : reps) out.append(report_dict(r));
  return out;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::ConservativeEvidence: return "conservative-evidence";
    case Verdict::NonConservative: return "non-conservative";
    default: return "inconclusive";
  }
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "multi-type continuous-state branching process kernel";
  m.attr("__version__") = "0.1.0";

  py::class_<BranchingMechanism>(m, "Mechanism")
      .def_readonly("m", &BranchingMechanism::m)
      .def("to_json",
           [](const BranchingMechanism& mech) {
             return io::mechanism_to_json(mech);
           })
      .def("__repr__", [](const BranchingMechanism& mech) {
        return "<Mechanism with " + std::to_string(mech.m) + " type(s)>";
      });

  m.def("parse_mechanism",
        [](const std::string& text) { return io::parse_mechanism_json(text); },
        py::arg("text"), "Parse a mechanism from its JSON form.");
  m.def("load_mechanism", &io::load_mechanism, py::arg("path"),
        "Load a mechanism from a JSON file.");
  m.def("stable_mechanism", &stable_mechanism, py::arg("sigma"),
        py::arg("alpha"),
        "One-type mechanism with branching exponent -sigma (-lambda)^alpha.");

  m.def("validate",
        [](const BranchingMechanism& mech) {
          const auto rep = validate_mechanism(mech);
          py::list violations;
          for (const auto& v : rep.violations) {
            py::dict item;
            item["row"] = v.row;
            item["rule"] = v.rule;
            item["detail"] = v.detail;
            violations.append(item);
          }
          py::dict d;
          d["pass"] = rep.pass;
          d["violations"] = violations;
          return d;
        },
        py::arg("mech"), "Admissibility report for a mechanism.");

  m.def("eval_h",
        [](const BranchingMechanism& mech, const ComplexVec& lam) {
          return eval_mechanism(mech, LeftHalfPoint(lam));
        },
        py::arg("mech"), py::arg("lam"),
        "Branching exponent H(lambda) on the left half-plane.");

  m.def("solve_cumulant",
        [](const BranchingMechanism& mech, const ComplexVec& lam,
           const RealVec& grid) {
          return flow_dict(solve_cumulant(mech, LeftHalfPoint(lam), grid));
        },
        py::arg("mech"), py::arg("lam"), py::arg("grid"),
        "Cumulant flow K(t, lambda) on the given time grid.");

  m.def("semigroup_defect",
        [](const BranchingMechanism& mech, const ComplexVec& lam, double s,
           double t) { return semigroup_defect(mech, LeftHalfPoint(lam), s, t); },
        py::arg("mech"), py::arg("lam"), py::arg("s"), py::arg("t"),
        "max_i |K_i(s+t) - K_i(s, K(t))|.");

  m.def("minimal_zero",
        [](const BranchingMechanism& mech, const RealVec& grid) {
          const auto res = minimal_solution_at_zero(mech, grid);
          py::dict d = flow_dict(res.flow);
          d["conclusive"] = res.conclusive;
          d["gap"] = res.gap;
          d["k_reached"] = res.k_reached;
          return d;
        },
        py::arg("mech"), py::arg("grid"),
        "Minimal solution K(t, 0) as the limit of interior flows.");

  m.def("conservativeness",
        [](const BranchingMechanism& mech, double T, double tol) {
          const auto rep = conservativeness_verdict(mech, T, tol);
          py::dict d;
          d["verdict"] = verdict_name(rep.verdict);
          d["sup_minimal_zero"] = rep.sup_minimal_zero;
          d["minimal_conclusive"] = rep.minimal_conclusive;
          return d;
        },
        py::arg("mech"), py::arg("T"), py::arg("tol") = 1e-7,
        "Conservativeness verdict from the minimal solution at zero.");

  m.def("laplace_transform",
        [](const BranchingMechanism& mech, const RealVec& x, double t,
           const ComplexVec& lam) {
          return laplace_transform(mech, x, t, LeftHalfPoint(lam));
        },
        py::arg("mech"), py::arg("x"), py::arg("t"), py::arg("lam"),
        "exp<x, K(t, lambda)>.");

  m.def("survival_mass",
        [](const BranchingMechanism& mech, const RealVec& x, double t) {
          const auto s = survival_mass(mech, x, t);
          py::dict d;
          d["value"] = s.value;
          d["conclusive"] = s.conclusive;
          return d;
        },
        py::arg("mech"), py::arg("x"), py::arg("t"),
        "Mass kept on finite states at time t.");

  m.def("nonuniqueness_residual",
        [](double r, double T) { return nonuniqueness_residual(r, T); },
        py::arg("r"), py::arg("T"),
        "Integral-equation residual of the shifted square flow family.");

  m.def("simulate_path",
        [](const BranchingMechanism& mech, const RealVec& x0, double T,
           double dt, double eps, double truncation_n,
           const std::string& policy, std::uint64_t seed,
           const RealVec& record_grid, std::uint64_t path_index) {
          const auto path = simulate_path(
              mech, x0, T,
              make_config(dt, eps, truncation_n, policy, seed, record_grid),
              path_index);
          py::dict d;
          d["times"] = path.times;
          d["states"] = path.states;
          d["lifetime"] = path.lifetime;
          return d;
        },
        py::arg("mech"), py::arg("x0"), py::arg("T"), py::arg("dt") = 1e-3,
        py::arg("eps") = 1e-2, py::arg("truncation_n") = 1e6,
        py::arg("policy") = "drift", py::arg("seed") = 0,
        py::arg("record_grid") = RealVec{}, py::arg("path_index") = 0,
        "One Euler path; dead segments carry +inf states.");

  m.def("verify_laplace",
        [](const BranchingMechanism& mech, const RealVec& x0, double t,
           const ComplexVec& lam, std::size_t n_paths, double dt, double eps,
           double truncation_n, const std::string& policy, std::uint64_t seed,
           double k) {
          VerifyOptions opt;
          opt.k = k;
          return report_dict(monte_carlo_laplace(
              mech, x0, t, LeftHalfPoint(lam), n_paths,
              make_config(dt, eps, truncation_n, policy, seed, {}), opt));
        },
        py::arg("mech"), py::arg("x0"), py::arg("t"), py::arg("lam"),
        py::arg("n_paths"), py::arg("dt") = 1e-3, py::arg("eps") = 1e-2,
        py::arg("truncation_n") = 1e6, py::arg("policy") = "drift",
        py::arg("seed") = 0, py::arg("k") = 3.0,
        "Monte Carlo Laplace transform against the flow reference; "
        "lam = 0 counts survivors instead.");

  m.def("verify_martingale",
        [](const BranchingMechanism& mech, const RealVec& x0,
           const ComplexVec& lam, double u, const RealVec& checkpoints,
           std::size_t n_paths, double dt, double eps, double truncation_n,
           const std::string& policy, std::uint64_t seed, double k) {
          VerifyOptions opt;
          opt.k = k;
          return report_list(martingale_residual(
              mech, x0, LeftHalfPoint(lam), u, checkpoints, n_paths,
              make_config(dt, eps, truncation_n, policy, seed, {}), opt));
        },
        py::arg("mech"), py::arg("x0"), py::arg("lam"), py::arg("u"),
        py::arg("checkpoints"), py::arg("n_paths"), py::arg("dt") = 1e-3,
        py::arg("eps") = 1e-2, py::arg("truncation_n") = 1e6,
        py::arg("policy") = "drift", py::arg("seed") = 0, py::arg("k") = 3.0,
        "Exponential martingale checked at the given checkpoints.");

  m.def("verify_branching",
        [](const BranchingMechanism& mech, const RealVec& x, const RealVec& y,
           double t, const ComplexVec& lam, std::size_t n_paths, double dt,
           double eps, double truncation_n, const std::string& policy,
           std::uint64_t seed, double k) {
          VerifyOptions opt;
          opt.k = k;
          return report_dict(branching_property_check(
              mech, x, y, t, LeftHalfPoint(lam), n_paths,
              make_config(dt, eps, truncation_n, policy, seed, {}), opt));
        },
        py::arg("mech"), py::arg("x"), py::arg("y"), py::arg("t"),
        py::arg("lam"), py::arg("n_paths"), py::arg("dt") = 1e-3,
        py::arg("eps") = 1e-2, py::arg("truncation_n") = 1e6,
        py::arg("policy") = "drift", py::arg("seed") = 0, py::arg("k") = 3.0,
        "Convolution property over independent path pairs.");

  m.def("generator_apply",
        [](const BranchingMechanism& mech, const ComplexVec& lam,
           const RealVec& x) {
          return generator_apply(mech, TestFunction::exponential(LeftHalfPoint(lam)),
                                 x);
        },
        py::arg("mech"), py::arg("lam"), py::arg("x"),
        "Generator on exp<lam, .>, assembled term by term and cross-checked "
        "against f(x) <x, H(lam)>.");
}
