#pragma once

// Lattice pricing of options on the plan cost process under node- and
// state-dependent drift f(S, n) and diffusion g(S, n).
//
// States live on a ladder adapted to the diffusion: rung spacing follows
// dS/dj = gbar(S) sqrt(dt) (RK4-integrated, gbar = median of g over levels),
// so for constant g the ladder is the familiar uniform lattice. From a rung
// the up/down children are the nearest rungs to S +- g(S,n) sqrt(dt); the
// branch probability p_up = (f dt + d_dn) / (d_dn + d_up) matches the local
// mean exactly and the variance to O(dt). Probabilities are clamped to [0,1]
// with a counter -- nonzero clamps mean dt is too coarse for the drift.

#include "rops/errors.hpp"
#include "rops/cpd_fit.hpp"
#include "rops/plan_model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace rops {

struct DiffusionSpec {
    std::function<double(double, int)> f; // drift per time at (S, level)
    std::function<double(double, int)> g; // diffusion per sqrt(time), > 0
    // optional per-level fitted-support band; states outside it count as
    // extrapolation in tree diagnostics
    std::vector<double> support_lo, support_hi;
};

// bridge from fitted coefficients: a tree level evaluates the polynomials of
// the plan node whose accrual interval covers the level's start time, so the
// valuation grid may be finer than the fitted grid (a drift-dominated plan
// process needs f*dt < g*sqrt(dt) to keep branch probabilities unclamped).
// The diffusion is floored at 1% of each slice's value at its own mean state:
// a linear fit extrapolated far outside the data can dip to the fit-time
// epsilon floor, which would collapse the ladder spacing.
DiffusionSpec make_diffusion(const PlanCpd& cpd, const TimeGrid& tree_grid);
DiffusionSpec make_diffusion(const PlanCpd& cpd); // tree grid = fitted grid

struct Tree {
    double s0 = 0.0;
    double t0 = 0.0;
    double dt = 0.0;
    int n_levels = 0; // N, levels 0..N

    std::vector<double> pos_up; // ladder rung j >= 0 at pos_up[j]
    std::vector<double> pos_dn; // rung -j at pos_dn[j]
    std::vector<int> lo, hi;    // rung band per level, lo[0] = hi[0] = 0

    std::vector<std::vector<double>> pup;          // per level 0..N-1
    std::vector<std::vector<std::int32_t>> up, dn; // child index in next band

    std::uint64_t clamp_count = 0;
    std::uint64_t extrapolation_count = 0;

    int width(int level) const { return hi[level] - lo[level] + 1; }
    double rung(int j) const { return j >= 0 ? pos_up[j] : pos_dn[-j]; }
    double state(int level, int i) const { return rung(lo[level] + i); }
};

Tree build_tree(const DiffusionSpec& spec, double S0, const TimeGrid& grid);

struct OptionSpec {
    enum class Exercise { european, american };

    std::function<double(double)> payoff; // terminal S -> value
    Exercise exercise = Exercise::european;
    // cancellation value before T for american exercise; payoff(S) when unset
    std::function<double(double, int)> early_value;
    double discount_rate = 0.0; // continuously compounded per time
};

double price_option(const Tree& tree, const OptionSpec& opt);

struct GreekBumps {
    double rel = 1e-2;
    double abs_floor = 1e-4;
};

struct GreeksReport {
    double value = 0.0;
    double delta = 0.0; // dV/dS0, central, rebuilt trees
    double gamma = 0.0; // d2V/dS0^2
    double theta = 0.0; // dV/dt0, forward, horizon held fixed
    double vega = 0.0;  // dV/d(global g scale), central
    double rho = 0.0;   // dV/d(rate), central
    std::uint64_t clamp_count = 0; // diagnostics of the unbumped tree
    std::uint64_t extrapolation_count = 0;
    int n_levels = 0;
};

GreeksReport greeks(const DiffusionSpec& spec, double S0, const TimeGrid& grid,
                    const OptionSpec& opt, const GreekBumps& bumps = {});

} // namespace rops
