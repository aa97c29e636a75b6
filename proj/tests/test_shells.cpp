// Two-shell simulation: determinism, additivity, conservation, a convolution
// oracle for chained durations, a law-of-total-variance check against closed
// forms, and horizon-overflow handling.

#include <doctest.h>

#include "fixtures.hpp"
#include "rops/distributions.hpp"
#include "rops/errors.hpp"
#include "rops/kernels/kernels.hpp"
#include "rops/shells.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

using namespace rops;

namespace {

Plan two_task_chain() {
    Plan p;
    p.grid = {0.0, 30.0, 10};
    p.projects = {"p"};
    p.tasks = {
        fixtures::task("A", "p", 100.0, 4.0, fixtures::dur_ts(4.0, 3.0, 7.0, 0.1, 0.2, 0.4),
                       fixtures::ts(1.0, 1.0, 1.0, 0.1, 0.1, 0.5), {}),
        fixtures::task("B", "p", 150.0, 3.0, fixtures::dur_ts(3.0, 2.0, 5.0, 0.15, 0.15, 0.5),
                       fixtures::ts(1.0, 1.0, 1.0, 0.1, 0.1, 0.5), {"A"}),
    };
    return p;
}

} // namespace

TEST_CASE("middle states are deterministic and weibull point-ranges are exact") {
    Plan p = fixtures::make_demo_plan();
    auto a = middle_shell_state(p, 99, 3, false);
    auto b = middle_shell_state(p, 99, 3, false);
    CHECK(a.durations == b.durations);
    CHECK(a.schedule.finish == b.schedule.finish);

    auto c = middle_shell_state(p, 99, 4, false);
    CHECK(a.durations != c.durations);

    Plan w;
    w.grid = {0.0, 10.0, 10};
    w.projects = {"p"};
    w.tasks = {fixtures::task("only", "p", 10.0, 2.0, fixtures::dur_wb(1.5, 3.0, 2.0, 2.0),
                              fixtures::ts(1.0, 1.0, 1.0, 0.1, 0.1, 0.5), {})};
    for (std::uint64_t m = 0; m < 16; ++m)
        CHECK(middle_shell_state(w, 7, m, false).durations[0] == 2.0);
}

TEST_CASE("chained durations match the convolution of their laws") {
    Plan p = two_task_chain();
    const TwoSidedSpec& da = p.tasks[0].duration_dist.two_sided;
    const TwoSidedSpec& db = p.tasks[1].duration_dist.two_sided;

    const int M = 8000;
    std::vector<double> finish(M);
    for (int m = 0; m < M; ++m)
        finish[m] = middle_shell_state(p, 555, m, false).schedule.finish[1];
    std::sort(finish.begin(), finish.end());

    // midpoint Stieltjes quadrature of P(A + B <= z) over A's law
    const int Q = 2000;
    auto oracle = [&](double z) {
        double acc = 0.0;
        for (int i = 0; i < Q; ++i) {
            const double x0 = da.lower + (da.upper - da.lower) * i / Q;
            const double x1 = da.lower + (da.upper - da.lower) * (i + 1) / Q;
            acc += two_sided_cdf(db, z - 0.5 * (x0 + x1)) *
                   (two_sided_cdf(da, x1) - two_sided_cdf(da, x0));
        }
        return acc;
    };

    double ks = 0.0;
    for (int i = 0; i < M; ++i) {
        const double F = oracle(finish[i]);
        ks = std::max(ks, std::max(F - static_cast<double>(i) / M,
                                   static_cast<double>(i + 1) / M - F));
    }
    CHECK(ks < 0.024);
    CHECK(finish.front() >= da.lower + db.lower);
    CHECK(finish.back() <= da.upper + db.upper);
}

TEST_CASE("ensemble rows are additive, cumulative, and deterministic") {
    Plan p = fixtures::make_demo_plan();
    const auto& ops = kernels::active_ops();
    const int N = p.grid.n_nodes;

    SimOptions opt;
    auto ens = run_simulation(p, 6, 5, 1234, opt);
    REQUIRE(ens.plan_dS.rows == 30);
    REQUIRE(ens.project_dS.size() == 3);
    CHECK(ens.project_ids == p.projects);

    std::vector<double> acc(N + 1), pref(N + 1);
    for (std::size_t r = 0; r < ens.plan_dS.rows; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (const auto& proj : ens.project_dS) ops.add(proj.row(r), acc.data(), N + 1);
        CHECK(std::memcmp(acc.data(), ens.plan_dS.row(r), (N + 1) * sizeof(double)) == 0);

        pref[0] = 0.0;
        for (int n = 1; n <= N; ++n) pref[n] = pref[n - 1] + ens.plan_dS.at(r, n);
        CHECK(std::memcmp(pref.data(), ens.plan_S.row(r), (N + 1) * sizeof(double)) == 0);
        CHECK(ens.plan_dS.at(r, 0) == 0.0);
    }

    auto again = run_simulation(p, 6, 5, 1234, opt);
    CHECK(ens.plan_dS.data == again.plan_dS.data);
    CHECK(ens.plan_S.data == again.plan_S.data);
    for (std::size_t j = 0; j < ens.project_dS.size(); ++j)
        CHECK(ens.project_dS[j].data == again.project_dS[j].data);

    auto other_seed = run_simulation(p, 6, 5, 1235, opt);
    CHECK(ens.plan_dS.data != other_seed.plan_dS.data);
}

TEST_CASE("worker count never changes the numbers") {
    Plan p = fixtures::make_demo_plan();
    SimOptions one;
    one.threads = 1;
    auto base = run_simulation(p, 12, 4, 77, one);
    for (int t : {2, 4, 7}) {
        SimOptions opt;
        opt.threads = t;
        auto ens = run_simulation(p, 12, 4, 77, opt);
        CHECK(base.plan_dS.data == ens.plan_dS.data);
        CHECK(base.plan_S.data == ens.plan_S.data);
        CHECK(base.replicate_ids == ens.replicate_ids);
    }
}

TEST_CASE("doubling every allocation doubles every path bitwise") {
    Plan p = fixtures::make_demo_plan();
    Plan d = p;
    for (auto& t : d.tasks) t.allocated_cost *= 2.0;
    auto base = run_simulation(p, 5, 6, 42);
    auto twice = run_simulation(d, 5, 6, 42);
    REQUIRE(base.plan_S.data.size() == twice.plan_S.data.size());
    for (std::size_t i = 0; i < base.plan_S.data.size(); ++i)
        CHECK(twice.plan_S.data[i] == 2.0 * base.plan_S.data[i]);
}

TEST_CASE("the standalone inner shell reproduces ensemble rows bitwise") {
    Plan p = fixtures::make_demo_plan();
    const int n_inner = 4;
    auto ens = run_simulation(p, 3, n_inner, 2718);
    const int N = p.grid.n_nodes;
    for (std::uint64_t m = 0; m < 3; ++m) {
        auto st = middle_shell_state(p, 2718, m, false);
        auto reps = inner_shell_costs(st, p, n_inner, 2718, m);
        REQUIRE(reps.size() == static_cast<std::size_t>(n_inner));
        for (int j = 0; j < n_inner; ++j) {
            const std::size_t r = m * n_inner + j;
            CHECK(std::memcmp(reps[j].plan_dS.data(), ens.plan_dS.row(r),
                              (N + 1) * sizeof(double)) == 0);
            for (std::size_t pr = 0; pr < p.projects.size(); ++pr)
                CHECK(std::memcmp(reps[j].project_dS[pr].data(), ens.project_dS[pr].row(r),
                                  (N + 1) * sizeof(double)) == 0);
        }
    }
}

TEST_CASE("totals obey conservation and the law of total variance") {
    Plan p;
    p.grid = {0.0, 24.0, 12};
    p.projects = {"p"};
    p.tasks = {
        fixtures::task("X", "p", 100.0, 4.0, fixtures::dur_ts(4.0, 3.0, 6.0, 0.1, 0.1, 0.5),
                       fixtures::ts(1.0, 0.7, 1.5, 0.15, 0.2, 0.45), {}),
        fixtures::task("Y", "p", 150.0, 5.0, fixtures::dur_wb(2.0, 5.0, 2.0, 9.0),
                       fixtures::ts(1.0, 0.8, 1.3, 0.1, 0.1, 0.5), {"X"}),
    };
    REQUIRE(validate_plan(p).ok());

    const int n_middle = 300, n_inner = 80;
    auto ens = run_simulation(p, n_middle, n_inner, 31415);
    REQUIRE(ens.overflow_middles == 0);
    const int N = p.grid.n_nodes;

    std::vector<double> finals(ens.plan_S.rows);
    for (std::size_t r = 0; r < ens.plan_S.rows; ++r) finals[r] = ens.plan_S.at(r, N);
    double mean = 0.0, var = 0.0;
    kernels::active_ops().mean_var(finals.data(), finals.size(), &mean, &var);
    var *= static_cast<double>(finals.size()) / (finals.size() - 1);

    const double m1 = two_sided_mean(p.tasks[0].cost_width);
    const double m2 = two_sided_mean(p.tasks[1].cost_width);
    const double expect_mean = 100.0 * m1 + 150.0 * m2;
    CHECK(std::fabs(mean - expect_mean) <= 3.0 * std::sqrt(var / finals.size()));

    // conditional mean given the middle state is constant (each task's row
    // sums to its cost), so the total variance is the average within-middle
    // variance: sum_k Var(width_k) * sum_n d_{k,n}^2
    const double v1 = two_sided_var(p.tasks[0].cost_width);
    const double v2 = two_sided_var(p.tasks[1].cost_width);
    double expect_var = 0.0;
    for (int m = 0; m < n_middle; ++m) {
        auto st = middle_shell_state(p, 31415, m, false);
        double s = 0.0;
        for (int n = 1; n <= N; ++n)
            s += v1 * st.mean_disbursements[0][n] * st.mean_disbursements[0][n] +
                 v2 * st.mean_disbursements[1][n] * st.mean_disbursements[1][n];
        expect_var += s;
    }
    expect_var /= n_middle;
    CHECK(std::fabs(var - expect_var) <= 0.05 * expect_var);

    // degenerate widths pin every path's total to the allocation sum
    Plan q = two_task_chain();
    auto qens = run_simulation(q, 40, 3, 8);
    for (std::size_t r = 0; r < qens.plan_S.rows; ++r)
        CHECK(std::fabs(qens.plan_S.at(r, q.grid.n_nodes) - 250.0) <= 250.0 * 1e-9);
}

TEST_CASE("middle states past the horizon are dropped, or kept under truncation") {
    Plan p;
    p.grid = {0.0, 10.0, 10};
    p.projects = {"p"};
    p.tasks = {fixtures::task("slow", "p", 100.0, 8.0, fixtures::dur_wb(1.0, 8.0, 1.0, 20.0),
                              fixtures::ts(1.0, 1.0, 1.0, 0.1, 0.1, 0.5), {})};
    REQUIRE(validate_plan(p).ok());

    const int n_middle = 60, n_inner = 3;
    const std::uint64_t seed = 2024;
    std::vector<int> kept;
    for (int m = 0; m < n_middle; ++m) {
        try {
            middle_shell_state(p, seed, m, false);
            kept.push_back(m);
        } catch (const SimulationError&) {
        }
    }
    const std::uint64_t dropped = n_middle - kept.size();
    REQUIRE(dropped > 0);
    REQUIRE(dropped * 2 <= static_cast<std::uint64_t>(n_middle));

    auto ens = run_simulation(p, n_middle, n_inner, seed);
    CHECK(ens.overflow_middles == dropped);
    REQUIRE(ens.plan_dS.rows == kept.size() * n_inner);
    REQUIRE(ens.replicate_ids.size() == ens.plan_dS.rows);

    std::size_t w = 0;
    for (int m : kept) {
        auto st = middle_shell_state(p, seed, m, false);
        auto reps = inner_shell_costs(st, p, n_inner, seed, m);
        for (int j = 0; j < n_inner; ++j, ++w) {
            CHECK(ens.replicate_ids[w] == static_cast<std::uint64_t>(m) * n_inner + j);
            CHECK(std::memcmp(reps[j].plan_dS.data(), ens.plan_dS.row(w),
                              (p.grid.n_nodes + 1) * sizeof(double)) == 0);
        }
    }

    SimOptions trunc;
    trunc.truncate = true;
    auto tens = run_simulation(p, n_middle, n_inner, seed, trunc);
    CHECK(tens.overflow_middles == 0);
    CHECK(tens.plan_dS.rows == static_cast<std::size_t>(n_middle) * n_inner);
    for (std::size_t r = 0; r < tens.plan_S.rows; ++r)
        CHECK(std::fabs(tens.plan_S.at(r, p.grid.n_nodes) - 100.0) <= 100.0 * 1e-9);

    // every middle state overflowing is a hard failure
    Plan always;
    always.grid = {0.0, 10.0, 10};
    always.projects = {"p"};
    always.tasks = {fixtures::task("huge", "p", 50.0, 12.0,
                                   fixtures::dur_wb(1.5, 12.0, 12.0, 12.0),
                                   fixtures::ts(1.0, 1.0, 1.0, 0.1, 0.1, 0.5), {})};
    CHECK_THROWS_AS(run_simulation(always, 4, 2, 1), SimulationError);

    CHECK_THROWS_AS(run_simulation(p, 0, 3, 1), SimulationError);
    Plan invalid;
    CHECK_THROWS_AS(run_simulation(invalid, 4, 4, 1), PlanError);
}
