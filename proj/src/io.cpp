#include "cbflow/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cbflow::io {

using nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void bad_field(const std::string& where, const std::string& why) {
  throw std::invalid_argument("mechanism JSON: " + where + ": " + why);
}

double want_number(const ordered_json& j, const std::string& where) {
  if (!j.is_number()) bad_field(where, "expected a number");
  return j.get<double>();
}

RealVec want_real_vec(const ordered_json& j, const std::string& where) {
  if (!j.is_array()) bad_field(where, "expected an array");
  RealVec out;
  for (const auto& v : j) out.push_back(want_number(v, where));
  return out;
}

LevyMeasure parse_levy(const ordered_json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type"))
    bad_field(where, "expected an object with a \"type\"");
  const std::string type = j.at("type").get<std::string>();
  if (type == "zero") return LevyZero{};
  if (type == "finite_atoms") {
    if (!j.contains("atoms")) bad_field(where, "missing \"atoms\"");
    LevyFiniteAtoms fa;
    std::size_t n = 0;
    for (const auto& a : j.at("atoms")) {
      const std::string at = where + ".atoms[" + std::to_string(n++) + "]";
      if (!a.is_object() || !a.contains("z") || !a.contains("mass"))
        bad_field(at, "expected {\"z\": [...], \"mass\": r}");
      fa.atoms.push_back(LevyAtom{want_real_vec(a.at("z"), at + ".z"),
                                  want_number(a.at("mass"), at + ".mass")});
    }
    return fa;
  }
  if (type == "axis_stable") {
    for (const char* key : {"axis", "alpha", "scale"})
      if (!j.contains(key)) bad_field(where, std::string("missing \"") + key + "\"");
    const double axis = want_number(j.at("axis"), where + ".axis");
    if (axis < 1.0 || axis != std::floor(axis))
      bad_field(where + ".axis", "expected a 1-based integer index");
    return LevyAxisStable{static_cast<std::size_t>(axis) - 1,
                          want_number(j.at("alpha"), where + ".alpha"),
                          want_number(j.at("scale"), where + ".scale")};
  }
  bad_field(where + ".type", "unknown variant \"" + type + "\"");
}

ordered_json levy_to_json(const LevyMeasure& levy) {
  ordered_json j;
  if (std::holds_alternative<LevyZero>(levy)) {
    j["type"] = "zero";
  } else if (const auto* fa = std::get_if<LevyFiniteAtoms>(&levy)) {
    j["type"] = "finite_atoms";
    j["atoms"] = ordered_json::array();
    for (const LevyAtom& a : fa->atoms)
      j["atoms"].push_back({{"z", a.z}, {"mass", a.mass}});
  } else {
    const auto& as = std::get<LevyAxisStable>(levy);
    j["type"] = "axis_stable";
    j["axis"] = as.axis + 1;  // 1-based on the wire
    j["alpha"] = as.alpha;
    j["scale"] = as.scale;
  }
  return j;
}

ordered_json complex_to_json(const Complex& c) {
  return ordered_json::array({c.real(), c.imag()});
}

ordered_json report_body(const VerificationReport& r) {
  ordered_json meta;
  meta["t"] = r.meta.t;
  meta["lambda"] = ordered_json::array();
  for (const Complex& c : r.meta.lambda)
    meta["lambda"].push_back(complex_to_json(c));
  meta["x0"] = r.meta.x0;
  char digest[20];
  std::snprintf(digest, sizeof(digest), "%016llx",
                static_cast<unsigned long long>(r.meta.config_digest));
  meta["config_digest"] = digest;

  ordered_json j;
  j["statistic"] = r.statistic;
  j["estimate"] = complex_to_json(r.estimate);
  j["reference"] = complex_to_json(r.reference);
  j["std_error"] = r.std_error;
  j["n_paths"] = r.n_paths;
  j["k"] = r.k;
  j["pass"] = r.pass;
  j["meta"] = meta;
  return j;
}

}  // namespace

BranchingMechanism parse_mechanism_json(const std::string& text, bool check) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("mechanism JSON: ") + e.what());
  }
  if (!j.is_object()) bad_field("$", "expected an object");

  if (j.contains("type")) {
    if (j.at("type").get<std::string>() != "stable")
      bad_field("$.type", "unknown shorthand");
    for (const char* key : {"sigma", "alpha"})
      if (!j.contains(key)) bad_field("$", std::string("missing \"") + key + "\"");
    return stable_mechanism(want_number(j.at("sigma"), "$.sigma"),
                            want_number(j.at("alpha"), "$.alpha"));
  }

  if (!j.contains("m") || !j.contains("rows"))
    bad_field("$", "missing \"m\" or \"rows\"");
  BranchingMechanism mech;
  const double m = want_number(j.at("m"), "$.m");
  if (m < 1.0 || m != std::floor(m)) bad_field("$.m", "expected a positive integer");
  mech.m = static_cast<std::size_t>(m);
  if (!j.at("rows").is_array()) bad_field("$.rows", "expected an array");
  std::size_t n = 0;
  for (const auto& row : j.at("rows")) {
    const std::string at = "$.rows[" + std::to_string(n++) + "]";
    if (!row.is_object() || !row.contains("alpha") || !row.contains("beta"))
      bad_field(at, "expected {\"alpha\", \"beta\", \"levy\"}");
    MechanismRow r;
    r.alpha = want_real_vec(row.at("alpha"), at + ".alpha");
    r.beta = want_number(row.at("beta"), at + ".beta");
    if (row.contains("levy")) r.levy = parse_levy(row.at("levy"), at + ".levy");
    mech.rows.push_back(std::move(r));
  }
  if (check) require_valid(mech);
  return mech;
}

BranchingMechanism load_mechanism(const std::string& path) {
  return parse_mechanism_json(read_file(path));
}

std::string mechanism_to_json(const BranchingMechanism& mech) {
  ordered_json j;
  j["m"] = mech.m;
  j["rows"] = ordered_json::array();
  for (const MechanismRow& r : mech.rows) {
    ordered_json row;
    row["alpha"] = r.alpha;
    row["beta"] = r.beta;
    row["levy"] = levy_to_json(r.levy);
    j["rows"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

std::string flow_to_csv(const CumulantFlow& flow) {
  const std::size_t m = flow.lambda0.size();
  std::ostringstream os;
  os << "t";
  for (std::size_t i = 1; i <= m; ++i) os << ",Re_K" << i << ",Im_K" << i;
  os << "\n";
  for (std::size_t j = 0; j < flow.times.size(); ++j) {
    os << fmt(flow.times[j]);
    for (std::size_t i = 0; i < m; ++i)
      os << ',' << fmt(flow.values[j][i].real()) << ','
         << fmt(flow.values[j][i].imag());
    os << "\n";
  }
  return os.str();
}

std::string path_to_csv(const SamplePath& path) {
  const std::size_t m = path.states.empty() ? 0 : path.states[0].size();
  std::ostringstream os;
  os << "t";
  for (std::size_t i = 1; i <= m; ++i) os << ",xi_" << i;
  os << ",alive\n";
  for (std::size_t j = 0; j < path.times.size(); ++j) {
    os << fmt(path.times[j]);
    for (std::size_t i = 0; i < m; ++i) os << ',' << fmt(path.states[j][i]);
    os << ',' << (path.alive(j) ? 1 : 0) << "\n";
  }
  return os.str();
}

std::string ensemble_summary_json(
    const SimConfig& config, std::size_t n_paths,
    const std::vector<std::pair<std::string, double>>& estimates) {
  ordered_json j;
  j["paths"] = n_paths;
  j["dt"] = config.dt;
  j["eps"] = config.eps;
  j["truncation_n"] = config.truncation_n;
  j["seed"] = config.master_seed;
  j["estimates"] = ordered_json::object();
  for (const auto& [name, value] : estimates) j["estimates"][name] = value;
  return j.dump(2) + "\n";
}

std::string report_to_json(const VerificationReport& report) {
  return report_body(report).dump(2) + "\n";
}

std::string reports_to_json(const std::vector<VerificationReport>& reports) {
  ordered_json arr = ordered_json::array();
  for (const VerificationReport& r : reports) arr.push_back(report_body(r));
  return arr.dump(2) + "\n";
}

std::string validation_to_json(const ValidationReport& report) {
  ordered_json j;
  j["pass"] = report.pass;
  j["violations"] = ordered_json::array();
  for (const Violation& v : report.violations)
    j["violations"].push_back(
        {{"row", v.row}, {"rule", v.rule}, {"detail", v.detail}});
  return j.dump(2) + "\n";
}

std::string error_json(const std::string& name, const std::string& detail) {
  ordered_json j;
  j["error"] = name;
  j["detail"] = detail;
  return j.dump() + "\n";
}

void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace cbflow::io
