// Lattice pricer checks: exact lattice geometry for constant diffusion,
// per-state moment matching, Bachelier and Black-Scholes closed-form oracles,
// put-call parity, American dominance, Greeks against closed forms, and the
// bridge from fitted node polynomials.

#include <doctest.h>

#include "fixtures.hpp"
#include "rops/cpd_fit.hpp"
#include "rops/errors.hpp"
#include "rops/pathtree.hpp"
#include "rops/shells.hpp"

#include <cmath>
#include <vector>

using namespace rops;

namespace {

constexpr double kBachelier = 0.3989422804014327; // 1/sqrt(2 pi)
constexpr double kPhi01 = 0.539827837277029;      // Phi(0.1)
constexpr double kBsCall = 7.965567455405803;     // 100 (2 Phi(0.1) - 1)

DiffusionSpec analytic(double (*f)(double, int), double (*g)(double, int)) {
    DiffusionSpec s;
    s.f = f;
    s.g = g;
    return s;
}

const DiffusionSpec kBachelierSpec = analytic(
    [](double, int) { return 0.0; }, [](double, int) { return 1.0; });
const DiffusionSpec kBsSpec = analytic(
    [](double, int) { return 0.0; }, [](double S, int) { return 0.2 * S; });

OptionSpec call_opt(double K) {
    OptionSpec o;
    o.payoff = [K](double S) { return std::max(S - K, 0.0); };
    return o;
}

OptionSpec put_opt(double K) {
    OptionSpec o;
    o.payoff = [K](double S) { return std::max(K - S, 0.0); };
    return o;
}

OptionSpec identity_opt() {
    OptionSpec o;
    o.payoff = [](double S) { return S; };
    return o;
}

} // namespace

TEST_CASE("constant diffusion gives the uniform lattice with exact halves") {
    const double S0 = 5.0, sigma = 1.3;
    const TimeGrid grid{0.0, 1.0, 40};
    auto spec = analytic([](double, int) { return 0.0; },
                         [](double, int) { return 1.3; });
    Tree t = build_tree(spec, S0, grid);
    CHECK(t.clamp_count == 0);
    const double h = sigma * std::sqrt(grid.dt());
    for (int n = 0; n <= 40; ++n) {
        CHECK(t.lo[n] == -n);
        CHECK(t.hi[n] == n);
        for (int i = 0; i < t.width(n); ++i) {
            const double expect = S0 + (t.lo[n] + i) * h;
            CHECK(t.state(n, i) == doctest::Approx(expect).epsilon(1e-13));
        }
    }
    for (int n = 0; n < 40; ++n)
        for (double p : t.pup[n]) CHECK(p == 0.5); // bitwise: shared stored gaps
}

TEST_CASE("each branch matches the local mean exactly and the variance to O(dt)") {
    const TimeGrid grid{0.0, 1.0, 50};
    auto spec = analytic([](double S, int) { return 0.05 * S + 0.5; },
                         [](double S, int) { return 0.2 * S + 1.0; });
    Tree t = build_tree(spec, 5.0, grid);
    REQUIRE(t.clamp_count == 0);
    const double dt = grid.dt();
    for (int n = 0; n < 50; ++n) {
        for (int i = 0; i < t.width(n); ++i) {
            const double S = t.state(n, i);
            const double up = t.rung(t.up[n][i] + t.lo[n + 1]);
            const double dn = t.rung(t.dn[n][i] + t.lo[n + 1]);
            REQUIRE(up > S);
            REQUIRE(dn < S);
            const double du = up - S, dd = S - dn;
            const double p = t.pup[n][i];
            const double fdt = spec.f(S, n) * dt;
            const double g2dt = spec.g(S, n) * spec.g(S, n) * dt;

            const double mean = p * du - (1.0 - p) * dd;
            CHECK(std::fabs(mean - fdt) <= 1e-9 * (du + dd + std::fabs(fdt)));

            const double var = p * du * du + (1.0 - p) * dd * dd - fdt * fdt;
            CHECK(std::fabs(var - (g2dt - fdt * fdt)) <= 0.1 * g2dt);
        }
    }
}

TEST_CASE("flat-drift valuation reproduces the normal-model price") {
    const TimeGrid grid{0.0, 1.0, 500};
    Tree t = build_tree(kBachelierSpec, 0.0, grid);
    CHECK(t.clamp_count == 0);
    const double v = price_option(t, call_opt(0.0));
    CHECK(std::fabs(v - kBachelier) <= 0.005 * kBachelier);
}

TEST_CASE("proportional diffusion reproduces the lognormal price and delta") {
    const TimeGrid grid{0.0, 1.0, 500};
    Tree t = build_tree(kBsSpec, 100.0, grid);
    CHECK(t.clamp_count == 0);
    const double v = price_option(t, call_opt(100.0));
    CHECK(std::fabs(v - kBsCall) <= 0.005 * kBsCall);

    auto rep = greeks(kBsSpec, 100.0, grid, call_opt(100.0));
    CHECK(rep.value == v);
    CHECK(std::fabs(rep.delta - kPhi01) <= 0.01 * kPhi01);
    CHECK(rep.gamma > 0.0);
    CHECK(rep.vega > 0.0);
    CHECK(rep.clamp_count == 0);
    CHECK(rep.n_levels == 500);

    // payoff collapsing to the underlying itself: unit delta
    auto deep = greeks(kBsSpec, 100.0, grid, call_opt(0.0));
    CHECK(std::fabs(deep.delta - 1.0) <= 0.01);
}

TEST_CASE("put-call parity on one tree holds to 1e-10") {
    const TimeGrid grid{0.0, 1.0, 500};
    Tree t = build_tree(kBsSpec, 100.0, grid);
    const double c = price_option(t, call_opt(100.0));
    const double p = price_option(t, put_opt(100.0));
    const double est = price_option(t, identity_opt());
    CHECK(std::fabs((c - p) - (est - 100.0)) <= 1e-10);

    Tree tb = build_tree(kBachelierSpec, 0.0, TimeGrid{0.0, 1.0, 300});
    const double cb = price_option(tb, call_opt(0.25));
    const double pb = price_option(tb, put_opt(0.25));
    const double estb = price_option(tb, identity_opt());
    CHECK(std::fabs((cb - pb) - (estb - 0.25)) <= 1e-10);
}

TEST_CASE("american exercise dominates european and respects cancellation floors") {
    const TimeGrid grid{0.0, 1.0, 300};
    Tree t = build_tree(kBsSpec, 100.0, grid);

    for (double K : {80.0, 100.0, 120.0}) {
        OptionSpec eu = put_opt(K);
        OptionSpec am = put_opt(K);
        am.exercise = OptionSpec::Exercise::american;
        const double ve = price_option(t, eu);
        const double va = price_option(t, am);
        CHECK(va >= ve - 1e-12);

        OptionSpec ec = call_opt(K);
        OptionSpec ac = call_opt(K);
        ac.exercise = OptionSpec::Exercise::american;
        const double vec_ = price_option(t, ec);
        const double vac = price_option(t, ac);
        CHECK(vac >= vec_ - 1e-12);
        // a driftless underlying never rewards early call exercise
        CHECK(vac <= vec_ + 1e-9 * (1.0 + vec_));
    }

    OptionSpec floored = call_opt(100.0);
    floored.exercise = OptionSpec::Exercise::american;
    floored.early_value = [](double, int) { return 3.0; };
    CHECK(price_option(t, floored) >= 3.0);
}

TEST_CASE("constant payoffs ride through the tree untouched") {
    const TimeGrid grid{0.0, 1.0, 200};
    auto spec = analytic([](double, int) { return 0.0; },
                         [](double, int) { return 0.7; });
    Tree t = build_tree(spec, 2.0, grid);
    OptionSpec flat;
    flat.payoff = [](double) { return 7.0; };
    CHECK(price_option(t, flat) == 7.0); // p = 1/2 exactly, r = 0

    OptionSpec zero;
    zero.payoff = [](double) { return 0.0; };
    auto rep0 = greeks(spec, 2.0, grid, zero);
    CHECK(std::fabs(rep0.value) <= 1e-12);
    CHECK(std::fabs(rep0.delta) <= 1e-8);
    CHECK(std::fabs(rep0.gamma) <= 1e-8);
    CHECK(std::fabs(rep0.theta) <= 1e-8);
    CHECK(std::fabs(rep0.vega) <= 1e-8);
    CHECK(std::fabs(rep0.rho) <= 1e-8);

    // nonzero constant: value has no S, t, or g sensitivity, but discounting
    // still prices the time value of the fixed leg: rho = -c (horizon - t0)
    auto rep7 = greeks(spec, 2.0, grid, flat);
    CHECK(rep7.value == 7.0);
    CHECK(std::fabs(rep7.delta) <= 1e-8);
    CHECK(std::fabs(rep7.gamma) <= 1e-8);
    CHECK(std::fabs(rep7.theta) <= 1e-8);
    CHECK(std::fabs(rep7.vega) <= 1e-8);
    CHECK(std::fabs(rep7.rho + 7.0) <= 1e-4);
}

TEST_CASE("oracle error shrinks as the grid doubles") {
    auto bs_err = [](int N) {
        Tree t = build_tree(kBsSpec, 100.0, TimeGrid{0.0, 1.0, N});
        return std::fabs(price_option(t, call_opt(100.0)) - kBsCall);
    };
    auto ba_err = [](int N) {
        Tree t = build_tree(kBachelierSpec, 0.0, TimeGrid{0.0, 1.0, N});
        return std::fabs(price_option(t, call_opt(0.0)) - kBachelier);
    };
    double prev = bs_err(125);
    for (int N : {250, 500, 1000}) {
        const double e = bs_err(N);
        CHECK(e <= 1.1 * prev);
        prev = e;
    }
    prev = ba_err(125);
    for (int N : {250, 500}) {
        const double e = ba_err(N);
        CHECK(e <= 1.1 * prev);
        prev = e;
    }
}

TEST_CASE("invalid diffusions and payoffs are rejected with located errors") {
    const TimeGrid grid{0.0, 1.0, 10};
    auto bad_g = analytic([](double, int) { return 0.0; },
                          [](double S, int) { return S - 5.0; });
    CHECK_THROWS_AS(build_tree(bad_g, 5.0, grid), PricingError);
    try {
        build_tree(bad_g, 5.0, grid);
    } catch (const PricingError& e) {
        CHECK(std::string(e.what()).find("S=") != std::string::npos);
    }

    auto nan_f = analytic(
        [](double S, int) { return S > 5.5 ? std::nan("") : 0.0; },
        [](double, int) { return 1.0; });
    CHECK_THROWS_AS(build_tree(nan_f, 5.0, grid), PricingError);

    Tree t = build_tree(kBachelierSpec, 0.0, TimeGrid{0.0, 1.0, 20});
    OptionSpec none;
    CHECK_THROWS_AS(price_option(t, none), PricingError);
    OptionSpec nan_pay;
    nan_pay.payoff = [](double S) { return S > 0 ? std::nan("") : 0.0; };
    CHECK_THROWS_AS(price_option(t, nan_pay), PricingError);
}

TEST_CASE("a failing bumped pricing names its greek") {
    // base tree never probes beyond S = 7, the delta up-bump does
    auto spec = analytic(
        [](double, int) { return 0.0; },
        [](double S, int) { return S > 7.01 ? std::nan("") : 1.0; });
    const TimeGrid grid{0.0, 1.0, 4};
    Tree base = build_tree(spec, 5.0, grid); // sanity: the unbumped tree is fine
    CHECK(base.clamp_count == 0);
    try {
        greeks(spec, 5.0, grid, call_opt(5.0));
        FAIL("expected the delta bump to fail");
    } catch (const PricingError& e) {
        CHECK(std::string(e.what()).find("delta") != std::string::npos);
    }
}

TEST_CASE("fitted node polynomials drive the tree through the bridge") {
    Plan plan = fixtures::make_demo_plan();
    auto ens = run_simulation(plan, 60, 40, 512);
    auto cpd = fit_plan_cpd(ens, 1, 1);

    // valuation grid finer than the fitted grid: the plan process is
    // drift-dominated at the fitted dt, and branch probabilities only stay
    // mostly unclamped once f*dt' drops below g*sqrt(dt')
    const TimeGrid fine{plan.grid.t0, plan.grid.horizon, 1440};
    auto spec = make_diffusion(cpd, fine);
    REQUIRE(spec.support_lo.size() == 1440u);

    Tree t = build_tree(spec, 0.0, fine);
    CHECK(t.n_levels == 1440);
    const double est = price_option(t, identity_opt());

    double mean_final = 0.0;
    const int N = plan.grid.n_nodes;
    for (std::size_t r = 0; r < ens.plan_S.rows; ++r) mean_final += ens.plan_S.at(r, N);
    mean_final /= static_cast<double>(ens.plan_S.rows);
    CHECK(std::fabs(est - mean_final) <= 0.05 * mean_final);

    // far outside the fitted band the tree keeps going but flags it
    Tree off = build_tree(make_diffusion(cpd), -50.0, plan.grid);
    CHECK(off.extrapolation_count > 0);
}
