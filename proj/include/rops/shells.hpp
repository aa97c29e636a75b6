#pragma once

// Middle and inner Monte Carlo shells. A middle state draws one duration
// per task, schedules it, and lays the mean disbursements on the grid; the
// inner shell perturbs each mean increment with the task's multiplicative
// cost law. n_middle x n_inner full cost paths come out as matrices over
// grid nodes, aggregated per plan and per project.
//
// Reproducibility contract: every middle state m reads stream
// (seed, duration, m) and every path replicate r = m*n_inner + j reads
// stream (seed, inner_cost, r), so the ensemble is a pure function of
// (plan, n_middle, n_inner, seed) independent of worker count.

#include "rops/plan_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rops {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct MiddleState {
    std::vector<double> durations; // indexed like plan.tasks
    ScheduleRealization schedule;
    std::vector<std::vector<double>> mean_disbursements; // [task][node 0..N]
};

struct PathEnsemble {
    TimeGrid grid;
    std::uint64_t seed = 0;
    int n_middle = 0;
    int n_inner = 0;
    std::vector<std::string> project_ids;     // plan declaration order
    std::vector<std::uint64_t> replicate_ids; // original index m*n_inner+j per kept row
    Matrix plan_dS;                           // [kept row][node 0..N], node 0 is 0
    Matrix plan_S;                            // cumulative, plan_S[r][0] = 0
    std::vector<Matrix> project_dS;           // aligned with project_ids
    std::uint64_t overflow_middles = 0;       // dropped middle states (no truncation)
};

struct SimOptions {
    bool truncate = false; // book beyond-horizon cost at the final node
    int threads = 1;       // worker cap; results are independent of it
};

// one middle state: durations drawn in task order from stream
// (seed, duration, middle_index), then scheduled and disbursed
MiddleState middle_shell_state(const Plan& plan, std::uint64_t seed, std::uint64_t middle_index,
                               bool truncate);

struct InnerReplicate {
    std::vector<double> plan_dS;               // node 0..N
    std::vector<std::vector<double>> project_dS; // plan declaration order
};

// n_inner inner replicates of one middle state; replicate j reads stream
// (seed, inner_cost, middle_index*n_inner + j) and consumes, per task in
// plan order, 2N uniforms (one side/magnitude pair per node)
std::vector<InnerReplicate> inner_shell_costs(const MiddleState& state, const Plan& plan,
                                              int n_inner, std::uint64_t seed,
                                              std::uint64_t middle_index);

PathEnsemble run_simulation(const Plan& plan, int n_middle, int n_inner, std::uint64_t seed,
                            const SimOptions& opts = {});

} // namespace rops
