#pragma once

// Relative risk across projects, computed from a simulated ensemble. Each
// project's cost increment over a node window is collapsed to one number per
// replicate (sum of dS, or sum of dS/S in relative mode), pushed through its
// empirical CDF to uniforms and on to standard-normal scores. Covariance and
// correlation are taken in that Gaussian space, where skewed marginals cannot
// distort them and strictly monotone rescalings of a project change nothing.
// Tail tables map the analysis back to money units, carrying the replicate
// ids behind every entry so each reported quantile can be audited against
// the raw ensemble.

#include "rops/shells.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rops {

// average-tie ranks over n + 1: u_i = rank(x_i) / (n + 1), strictly inside
// (0, 1) and invariant under strictly increasing transforms of the input.
// Fewer than 20 samples is rejected as a degenerate marginal.
std::vector<double> rank_to_uniform(const std::vector<double>& samples);

// standard normal quantile (Wichura's rational approximations), absolute
// error well under 1e-9 across [1e-12, 1 - 1e-12]; u outside (0, 1) throws
// std::domain_error
double normal_quantile(double u);

std::vector<double> gaussian_scores(const std::vector<double>& uniforms);

struct GaussianScores {
    Matrix z;                     // [replicate x project], kept rows only
    std::uint64_t exclusions = 0; // replicates dropped by the relative-mode rule
};

struct TailEntry {
    std::string project_id;
    double quantile = 0.0;  // requested level q
    double threshold = 0.0; // smallest windowed value inside the tail set
    // P(other project also beyond its own threshold | this one is), aligned
    // with RiskReport::project_ids; the self entry is 1 by definition
    std::vector<double> co_exceedance;
    std::vector<std::uint64_t> replicates; // ensemble replicate ids, ascending
    std::vector<double> values;            // windowed statistic per listed id
};

struct RiskReport {
    std::vector<std::string> project_ids; // analyzed columns, ensemble order
    std::vector<std::string> excluded;    // zero-variance projects left out
    std::vector<std::string> warnings;
    int window_lo = 0; // resolved node window, 1-based inclusive
    int window_hi = 0;
    bool relative = false;
    Matrix covariance;  // Gaussian-space sample covariance, n - 1 normalized
    Matrix correlation; // PSD-repaired
    GaussianScores scores;
    std::vector<TailEntry> tail_table; // project-major, quantiles as given
};

struct RiskOptions {
    int window_lo = 1;             // first accrual node of the window
    int window_hi = 0;             // last node; 0 means the full horizon
    bool relative = false;         // sum dS / S(t_{n-1}) instead of dS
    std::vector<double> quantiles{0.95};
};

// Symmetric-matrix cleanup for near-PSD correlation estimates: eigenvalues
// below zero are clipped and the diagonal renormalized back to 1. Input with
// smallest eigenvalue >= -1e-12 is returned unchanged.
Matrix psd_repair(const Matrix& m);

// The full analysis. Needs >= 2 projects and >= 100 replicates; a project
// whose windowed statistic never varies is excluded with a warning. In
// relative mode a replicate whose prior project level is <= 0 anywhere in
// the window is dropped for all projects (rows must stay aligned), tallied
// in scores.exclusions; project levels start at 0, so a window opening at
// node 1 drops everything.
RiskReport project_risk(const PathEnsemble& ens, const RiskOptions& opts = {});

} // namespace rops
