#pragma once

// Artifact plumbing for the CLI: the run manifest plus every table the
// pipeline exports. All CSVs are tidy (one observation per row), numbers are
// written with shortest round-trip precision so a reloaded file reproduces
// the doubles bit for bit, and each file's first line is "# manifest <hex>"
// tying it to the run that produced it. The manifest digest deliberately
// excludes the timestamp and the thread cap (neither can change a result):
// two runs with equal digests produce identical artifacts except for the
// manifest's own timestamp field.

#include "rops/asa_optimizer.hpp"
#include "rops/copula_risk.hpp"
#include "rops/cpd_fit.hpp"
#include "rops/pathtree.hpp"
#include "rops/shells.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rops {

inline constexpr const char* kToolVersion = "rops 0.1.0";

struct RunManifest {
    std::string tool = kToolVersion;
    std::string command;     // CLI verb
    std::string plan_path;
    std::string plan_digest; // hex of the raw plan file bytes
    std::uint64_t seed = 0;
    int n_middle = 0;
    int n_inner = 0;
    int order_f = 0;
    int order_g = 0;
    int threads = 1; // recorded, not digested: results never depend on it
    bool truncate = false;
    // verb-specific knobs as ordered key/value pairs
    std::vector<std::pair<std::string, std::string>> extra;
    std::string timestamp; // not part of the digest
};

std::string hex64(std::uint64_t v);
std::string fmt_double(double x); // shortest decimal that parses back exactly
std::string utc_timestamp_now();

// digest over everything except the timestamp; equal digests mean a rerun
// must reproduce every other artifact byte for byte
std::string manifest_digest(const RunManifest& m);
void write_manifest(const std::string& path, const RunManifest& m);

void write_plan_paths_csv(const std::string& path, const PathEnsemble& ens,
                          const std::string& manifest_hex);
void write_project_paths_csv(const std::string& path, const PathEnsemble& ens,
                             const std::string& manifest_hex);
void write_histograms_csv(const std::string& path, const std::vector<SliceHistogram>& slices,
                          const std::string& manifest_hex);

// Columns carry the full slice state (coefficients, floors, flags, prior
// level stats), so a reloaded CPD prices exactly like the fitted one.
void write_cpd_csv(const std::string& path, const PlanCpd& cpd,
                   const std::string& manifest_hex);
PlanCpd load_cpd_csv(const std::string& path);

void write_option_report(const std::string& path, const GreeksReport& rep,
                         const std::string& manifest_hex);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace,
                     const std::vector<std::string>& names, const std::string& manifest_hex);
void write_multi_min_csv(const std::string& path, const std::vector<MultiMinEntry>& entries,
                         const std::vector<std::string>& names,
                         const std::string& manifest_hex);
void write_optim_report(const std::string& path, const OptimResult& res,
                        const std::vector<std::string>& names,
                        const std::string& manifest_hex);

void write_risk_json(const std::string& path, const RiskReport& rep,
                     const std::string& manifest_hex);
void write_risk_audit_csv(const std::string& path, const RiskReport& rep,
                          const std::string& manifest_hex);

} // namespace rops
