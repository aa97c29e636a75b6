#pragma once

// Shared test fixtures and small numeric helpers. make_demo_plan() must stay
// field-for-field identical to docs/demo_plan.json; test_plan_json checks it.

#include "rops/plan_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace fixtures {

inline rops::TwoSidedSpec ts(double mean, double lo, double hi, double ql, double qh,
                             double pl) {
    rops::TwoSidedSpec s;
    s.mean = mean;
    s.lower = lo;
    s.upper = hi;
    s.q_low = ql;
    s.q_high = qh;
    s.p_low = pl;
    return s;
}

inline rops::DurationSpec dur_ts(double mean, double lo, double hi, double ql, double qh,
                                 double pl) {
    rops::DurationSpec d;
    d.kind = rops::DurationSpec::Kind::two_sided;
    d.two_sided = ts(mean, lo, hi, ql, qh, pl);
    return d;
}

inline rops::DurationSpec dur_wb(double shape, double scale, double lo, double hi) {
    rops::DurationSpec d;
    d.kind = rops::DurationSpec::Kind::weibull;
    d.weibull.shape = shape;
    d.weibull.scale = scale;
    d.weibull.lower = lo;
    d.weibull.upper = hi;
    return d;
}

inline rops::TaskSpec task(const char* id, const char* proj, double cost, double sched,
                           rops::DurationSpec dd, rops::TwoSidedSpec cw,
                           std::vector<std::string> preds) {
    rops::TaskSpec t;
    t.id = id;
    t.project_id = proj;
    t.allocated_cost = cost;
    t.scheduled_duration = sched;
    t.duration_dist = dd;
    t.cost_width = cw;
    t.predecessors = std::move(preds);
    return t;
}

// Three projects, twelve tasks, both duration kinds, a diamond per project
// and one cross-project dependency; horizon wide enough that no realization
// can overflow. Mirrored by docs/demo_plan.json.
inline rops::Plan make_demo_plan() {
    using rops::Plan;
    Plan p;
    p.grid.t0 = 0.0;
    p.grid.horizon = 36.0;
    p.grid.n_nodes = 36;
    p.projects = {"alpha", "beta", "gamma"};

    const rops::TwoSidedSpec cw_tight = ts(1.0, 0.85, 1.3, 0.1, 0.15, 0.5);
    const rops::TwoSidedSpec cw_wide = ts(1.0, 0.7, 1.6, 0.2, 0.3, 0.45);

    p.tasks = {
        task("a1", "alpha", 120.0, 4.0, dur_ts(4.0, 3.0, 7.0, 0.1, 0.2, 0.4), cw_tight, {}),
        task("a2", "alpha", 260.0, 4.5, dur_wb(2.0, 5.0, 2.0, 9.0), cw_wide, {"a1"}),
        task("a3", "alpha", 80.0, 3.0, dur_ts(3.0, 2.0, 5.0, 0.15, 0.15, 0.5), cw_tight,
             {"a1"}),
        task("a4", "alpha", 150.0, 3.5, dur_ts(3.5, 2.5, 5.0, 0.1, 0.1, 0.35), cw_tight,
             {"a2", "a3"}),
        task("b1", "beta", 90.0, 3.0, dur_wb(1.5, 3.5, 1.5, 7.0), cw_tight, {}),
        task("b2", "beta", 140.0, 5.0, dur_ts(5.0, 3.5, 8.0, 0.12, 0.25, 0.45), cw_wide,
             {"b1"}),
        task("b3", "beta", 60.0, 2.5, dur_ts(2.5, 2.0, 4.0, 0.1, 0.1, 0.5), cw_tight, {"b1"}),
        task("b4", "beta", 110.0, 4.0, dur_wb(2.5, 4.5, 2.0, 8.0), cw_tight, {"b2", "b3"}),
        task("c1", "gamma", 70.0, 2.0, dur_ts(2.0, 1.5, 3.5, 0.2, 0.2, 0.5), cw_tight, {}),
        task("c2", "gamma", 180.0, 4.0, dur_ts(4.0, 3.0, 6.0, 0.1, 0.2, 0.4), cw_wide,
             {"c1", "a4"}),
        task("c3", "gamma", 95.0, 3.0, dur_wb(2.0, 3.5, 1.5, 6.5), cw_tight, {"c1"}),
        task("c4", "gamma", 130.0, 3.5, dur_ts(3.5, 2.5, 5.5, 0.15, 0.15, 0.5), cw_tight,
             {"c2", "c3"}),
    };

    p.parameters = {
        {"crash_a2", 0.6, 1.4, 1.0},
        {"scope_c3", 0.8, 1.5, 1.0},
    };
    p.bindings = {
        {"crash_a2", "a2", "scheduled_duration"},
        {"scope_c3", "c3", "allocated_cost"},
    };
    return p;
}

// Two projects with no cross edges and disjoint task streams: correlation
// between their windowed sums has no structural source.
inline rops::Plan make_independent_plan() {
    rops::Plan p;
    p.grid.t0 = 0.0;
    p.grid.horizon = 20.0;
    p.grid.n_nodes = 20;
    p.projects = {"left", "right"};
    const rops::TwoSidedSpec cw = ts(1.0, 0.8, 1.4, 0.1, 0.1, 0.5);
    p.tasks = {
        task("l1", "left", 100.0, 3.0, dur_ts(3.0, 2.0, 5.0, 0.1, 0.1, 0.5), cw, {}),
        task("l2", "left", 150.0, 4.0, dur_ts(4.0, 3.0, 6.0, 0.1, 0.2, 0.4), cw, {"l1"}),
        task("r1", "right", 120.0, 3.5, dur_ts(3.5, 2.5, 5.5, 0.15, 0.15, 0.5), cw, {}),
        task("r2", "right", 90.0, 2.5, dur_wb(2.0, 3.0, 1.5, 6.0), cw, {"r1"}),
    };
    return p;
}

// composite Simpson on [a,b]; n must be even
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// Box-Muller standard normals on the project RNG, so synthetic data is
// reproducible everywhere the library is
struct NormalGen {
    rops::Rng rng;
    bool has_spare = false;
    double spare = 0.0;

    explicit NormalGen(std::uint64_t seed) : rng(seed) {}
    double next() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        const double u1 = 1.0 - rng.next_uniform(); // (0, 1]
        const double u2 = rng.next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare = r * std::sin(two_pi * u2);
        has_spare = true;
        return r * std::cos(two_pi * u2);
    }
};

// Kolmogorov-Smirnov distance between a sample and an analytic CDF
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double c = cdf(sample[i]);
        d = std::max(d, std::fabs(c - static_cast<double>(i) / n));
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - c));
    }
    return d;
}

} // namespace fixtures
