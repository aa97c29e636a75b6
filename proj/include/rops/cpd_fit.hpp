#pragma once

// Conditional-density estimation for the plan cost process. Per grid node n
// the simulated increments dS over (t_{n-1}, t_n] are summarized as a
// normalized histogram and fitted to
//
//   P(dS | S, n) = (2 pi g(S)^2 dt)^(-1/2) exp(-(dS - f(S) dt)^2 / (2 g(S)^2 dt))
//
// with polynomial drift f(S) = x_f0 + x_f1 S + ... and diffusion
// g(S) = x_g0 + x_g1 S + ... per node. Fitting runs in two stages: quantile
// buckets of S(t_{n-1}) give moment estimates that seed a direct maximization
// of the exact per-sample log-likelihood.

#include "rops/shells.hpp"

#include <cstdint>
#include <vector>

namespace rops {

enum class HistogramMode { absolute, relative };

struct SliceHistogram {
    int node = 0;
    double t = 0.0;                // right edge of the accrual interval
    std::vector<double> bin_edges; // bins + 1 values, strictly increasing
    std::vector<double> mass;      // bins values, sums to 1 when nonempty
    std::uint64_t n_samples = 0;
    std::uint64_t excluded = 0;    // relative mode: rows with S(t_{n-1}) <= 0
    bool deterministic = false;    // all samples identical (single degenerate bin)
};

// one histogram per node 1..N; mode=relative bins dS/S(t_{n-1})
std::vector<SliceHistogram> build_histograms(const PathEnsemble& ens, int bins,
                                             HistogramMode mode);

struct SliceFit {
    std::vector<double> f_coeffs;  // order_f + 1 entries
    std::vector<double> g_coeffs;  // order_g + 1 entries
    double loglik = 0.0;           // refined total log-likelihood
    double stage1_loglik = 0.0;    // at the moment-initialized coefficients
    double g_floor = 0.0;          // positivity clamp used in fitting and eval
    std::uint64_t n_samples = 0;
    bool deterministic = false;    // zero-variance increments
    bool order_fallback = false;   // too few distinct S levels: order-0 estimate
};

// ds[i] paired with the replicate's prior level s_prev[i]; needs >= 30 samples
SliceFit fit_slice(const std::vector<double>& ds, const std::vector<double>& s_prev,
                   int order_f, int order_g, double dt);

struct SRefStats {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct PlanCpd {
    int order_f = 1;
    int order_g = 1;
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<SliceFit> slices; // slices[k] covers node k+1
    std::vector<SRefStats> s_ref; // S(t_{n-1}) statistics per slice

    int n_nodes() const { return static_cast<int>(slices.size()); }
    double drift(int node, double S) const;     // node in 1..n_nodes()
    double diffusion(int node, double S) const; // clamped to the slice floor
};

struct FitOptions {
    int threads = 1; // node fits are independent; results do not depend on this
};

PlanCpd fit_plan_cpd(const PathEnsemble& ens, int order_f, int order_g,
                     const FitOptions& opts = {});

// exact density (2 pi g^2 dt)^(-1/2) exp(-(dS - f dt)^2 / (2 g^2 dt))
double eval_cpd(const PlanCpd& cpd, int node, double S, double dS);

} // namespace rops
