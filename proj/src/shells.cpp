#include "rops/shells.hpp"

#include "rops/errors.hpp"
#include "rops/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <thread>

namespace rops {

namespace {

struct TaskSampler {
    kernels::TwoSidedParams cost; // multiplicative factor law
    bool degenerate;              // lower == mean == upper: factor is exactly mean
};

std::vector<TaskSampler> make_samplers(const Plan& plan) {
    std::vector<TaskSampler> out;
    out.reserve(plan.tasks.size());
    for (const auto& t : plan.tasks) {
        const TwoSidedSpec& w = t.cost_width;
        TaskSampler s;
        s.cost.mean = w.mean;
        s.cost.lower = w.lower;
        s.cost.upper = w.upper;
        s.cost.q_low = w.q_low;
        s.cost.q_high = w.q_high;
        s.cost.p_low = w.p_low;
        s.cost.log1p_low = std::log1p(1.0 / w.q_low);
        s.cost.log1p_high = std::log1p(1.0 / w.q_high);
        s.degenerate = w.lower == w.mean && w.mean == w.upper;
        out.push_back(s);
    }
    return out;
}

std::vector<int> task_project_index(const Plan& plan) {
    std::map<std::string, int> proj;
    for (std::size_t i = 0; i < plan.projects.size(); ++i)
        proj.emplace(plan.projects[i], static_cast<int>(i));
    std::vector<int> out(plan.tasks.size());
    for (std::size_t k = 0; k < plan.tasks.size(); ++k)
        out[k] = proj.at(plan.tasks[k].project_id);
    return out;
}

// fill one replicate's per-project dS rows (caller zeroes them first)
void fill_inner_rows(const MiddleState& state, const Plan& plan,
                     const std::vector<TaskSampler>& samplers,
                     const std::vector<int>& task_project, std::uint64_t seed,
                     std::uint64_t replicate_index, std::vector<double*>& project_rows,
                     std::vector<double>& us, std::vector<double>& um,
                     std::vector<double>& factors) {
    const auto& ops = kernels::active_ops();
    const int N = plan.grid.n_nodes;
    Rng rng = Rng::stream(seed, rngdom::inner_cost, replicate_index);
    for (std::size_t k = 0; k < plan.tasks.size(); ++k) {
        // fixed draw budget: one (side, magnitude) pair per node, active or not
        for (int n = 0; n < N; ++n) {
            us[n] = rng.next_uniform();
            um[n] = rng.next_uniform();
        }
        const double* means = state.mean_disbursements[k].data(); // node 0..N
        double* proj = project_rows[task_project[k]];
        if (samplers[k].degenerate) {
            ops.scale_add(samplers[k].cost.mean, means + 1, proj + 1, N);
            continue;
        }
        ops.two_sided_map(us.data(), um.data(), factors.data(), N, samplers[k].cost);
        for (int n = 0; n < N; ++n)
            proj[n + 1] = std::fma(means[n + 1], factors[n], proj[n + 1]);
    }
}

} // namespace

MiddleState middle_shell_state(const Plan& plan, std::uint64_t seed, std::uint64_t middle_index,
                               bool truncate) {
    MiddleState st;
    st.durations.resize(plan.tasks.size());
    Rng rng = Rng::stream(seed, rngdom::duration, middle_index);
    for (std::size_t k = 0; k < plan.tasks.size(); ++k)
        st.durations[k] = duration_sample(plan.tasks[k].duration_dist, rng);
    st.schedule = schedule_realization(plan, st.durations);
    st.mean_disbursements = disbursement_profile(plan, st.schedule, plan.grid, truncate);
    return st;
}

std::vector<InnerReplicate> inner_shell_costs(const MiddleState& state, const Plan& plan,
                                              int n_inner, std::uint64_t seed,
                                              std::uint64_t middle_index) {
    if (n_inner < 1) throw SimulationError("inner_shell_costs: n_inner must be >= 1");
    const auto samplers = make_samplers(plan);
    const auto task_project = task_project_index(plan);
    const int N = plan.grid.n_nodes;
    const std::size_t P = plan.projects.size();
    const auto& ops = kernels::active_ops();

    std::vector<double> us(N), um(N), factors(N);
    std::vector<InnerReplicate> out(n_inner);
    for (int j = 0; j < n_inner; ++j) {
        InnerReplicate& rep = out[j];
        rep.plan_dS.assign(N + 1, 0.0);
        rep.project_dS.assign(P, std::vector<double>(N + 1, 0.0));
        std::vector<double*> rows(P);
        for (std::size_t p = 0; p < P; ++p) rows[p] = rep.project_dS[p].data();
        const std::uint64_t r = middle_index * static_cast<std::uint64_t>(n_inner) + j;
        fill_inner_rows(state, plan, samplers, task_project, seed, r, rows, us, um, factors);
        for (std::size_t p = 0; p < P; ++p)
            ops.add(rep.project_dS[p].data(), rep.plan_dS.data(), N + 1);
    }
    return out;
}

PathEnsemble run_simulation(const Plan& plan, int n_middle, int n_inner, std::uint64_t seed,
                            const SimOptions& opts) {
    ValidationReport rep = validate_plan(plan);
    if (!rep.ok()) throw PlanError("run_simulation: invalid plan: " + rep.joined());
    if (n_middle < 1 || n_inner < 1)
        throw SimulationError("run_simulation: shell sizes must be >= 1");
    if (static_cast<long long>(n_middle) * n_inner < 100)
        std::fprintf(stderr, "rops: warning: only %d total replicates, statistics will be "
                             "noisy below 100\n",
                     n_middle * n_inner);

    const int N = plan.grid.n_nodes;
    const std::size_t P = plan.projects.size();
    const std::size_t rows = static_cast<std::size_t>(n_middle) * n_inner;
    const auto samplers = make_samplers(plan);
    const auto task_project = task_project_index(plan);

    PathEnsemble ens;
    ens.grid = plan.grid;
    ens.seed = seed;
    ens.n_middle = n_middle;
    ens.n_inner = n_inner;
    ens.project_ids = plan.projects;
    ens.plan_dS = Matrix(rows, N + 1);
    ens.plan_S = Matrix(rows, N + 1);
    ens.project_dS.assign(P, Matrix(rows, N + 1));
    std::vector<unsigned char> middle_ok(n_middle, 0);

    const auto& ops = kernels::active_ops();
    auto work = [&](int m_begin, int m_end) {
        std::vector<double> us(N), um(N), factors(N);
        for (int m = m_begin; m < m_end; ++m) {
            MiddleState st;
            try {
                st = middle_shell_state(plan, seed, m, opts.truncate);
            } catch (const SimulationError&) {
                continue; // horizon overflow: drop this middle state, count later
            }
            middle_ok[m] = 1;
            for (int j = 0; j < n_inner; ++j) {
                const std::size_t r = static_cast<std::size_t>(m) * n_inner + j;
                std::vector<double*> rows_p(P);
                for (std::size_t p = 0; p < P; ++p) rows_p[p] = ens.project_dS[p].row(r);
                fill_inner_rows(st, plan, samplers, task_project, seed, r, rows_p, us, um,
                                factors);
                double* plan_row = ens.plan_dS.row(r);
                for (std::size_t p = 0; p < P; ++p) ops.add(rows_p[p], plan_row, N + 1);
                double* s_row = ens.plan_S.row(r);
                s_row[0] = 0.0;
                for (int n = 1; n <= N; ++n) s_row[n] = s_row[n - 1] + plan_row[n];
            }
        }
    };

    const int threads = std::max(1, opts.threads);
    if (threads == 1 || n_middle == 1) {
        work(0, n_middle);
    } else {
        // static block partition; each worker writes disjoint preallocated rows
        const int T = std::min(threads, n_middle);
        std::vector<std::thread> pool;
        const int chunk = (n_middle + T - 1) / T;
        for (int w = 0; w < T; ++w) {
            const int a = w * chunk;
            const int b = std::min(n_middle, a + chunk);
            if (a >= b) break;
            pool.emplace_back(work, a, b);
        }
        for (auto& th : pool) th.join();
    }

    std::uint64_t dropped = 0;
    for (int m = 0; m < n_middle; ++m)
        if (!middle_ok[m]) ++dropped;
    ens.overflow_middles = dropped;
    if (dropped * 2 > static_cast<std::uint64_t>(n_middle))
        throw SimulationError("run_simulation: " + std::to_string(dropped) + " of " +
                              std::to_string(n_middle) +
                              " middle states overflow the horizon (more than half)");

    // compact kept rows in order
    ens.replicate_ids.reserve(rows);
    std::size_t w = 0;
    for (int m = 0; m < n_middle; ++m) {
        if (!middle_ok[m]) continue;
        for (int j = 0; j < n_inner; ++j) {
            const std::size_t r = static_cast<std::size_t>(m) * n_inner + j;
            if (w != r) {
                std::copy_n(ens.plan_dS.row(r), N + 1, ens.plan_dS.row(w));
                std::copy_n(ens.plan_S.row(r), N + 1, ens.plan_S.row(w));
                for (std::size_t p = 0; p < P; ++p)
                    std::copy_n(ens.project_dS[p].row(r), N + 1, ens.project_dS[p].row(w));
            }
            ens.replicate_ids.push_back(r);
            ++w;
        }
    }
    ens.plan_dS.rows = w;
    ens.plan_dS.data.resize(w * (N + 1));
    ens.plan_S.rows = w;
    ens.plan_S.data.resize(w * (N + 1));
    for (std::size_t p = 0; p < P; ++p) {
        ens.project_dS[p].rows = w;
        ens.project_dS[p].data.resize(w * (N + 1));
    }
    if (dropped)
        std::fprintf(stderr, "rops: %llu middle states overflowed the horizon and were "
                             "dropped\n",
                     static_cast<unsigned long long>(dropped));
    return ens;
}

} // namespace rops
