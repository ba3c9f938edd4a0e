#pragma once
// Serialization between the in-memory types and their external formats:
// mechanism JSON, flow CSV, path CSV, ensemble summary JSON, report JSON.
// Field names and header layouts are normative; all floating point goes out
// at seventeen significant digits so artifacts are byte-stable round trips.

#include <string>
#include <utility>
#include <vector>

#include "cbflow/cumulant.hpp"
#include "cbflow/mechanism.hpp"
#include "cbflow/simulate.hpp"
#include "cbflow/verify.hpp"

namespace cbflow::io {

// {"m": int, "rows": [{"alpha": [...], "beta": r, "levy": {"type": ...}}]}
// with levy variants "zero", "finite_atoms" and "axis_stable" (1-based axis
// on the wire).  {"type": "stable", "sigma": s, "alpha": a} expands through
// stable_mechanism.  Throws std::invalid_argument naming the offending field;
// with check set the result is also validated before it is returned (off by
// choice only for the validate command, which reports violations itself).
BranchingMechanism parse_mechanism_json(const std::string& text,
                                        bool check = true);
BranchingMechanism load_mechanism(const std::string& path);
std::string mechanism_to_json(const BranchingMechanism& mech);

// header t,Re_K1,Im_K1,...,Re_Km,Im_Km then one row per grid time
std::string flow_to_csv(const CumulantFlow& flow);

// header t,xi_1,...,xi_m,alive with alive in {0,1}
std::string path_to_csv(const SamplePath& path);

// {"paths", "dt", "eps", "truncation_n", "seed", "estimates": {...}}
std::string ensemble_summary_json(
    const SimConfig& config, std::size_t n_paths,
    const std::vector<std::pair<std::string, double>>& estimates);

std::string report_to_json(const VerificationReport& report);
std::string reports_to_json(const std::vector<VerificationReport>& reports);

std::string validation_to_json(const ValidationReport& report);

// {"error": name, "detail": ...} for the command-line front end
std::string error_json(const std::string& name, const std::string& detail);

// write-to-temp-then-rename so readers never observe a partial artifact
void atomic_write(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);  // throws on missing file

}  // namespace cbflow::io
