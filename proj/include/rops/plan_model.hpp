#pragma once

// Plan / project / task domain model: precedence-constrained tasks grouped
// into projects, a uniform time grid, deterministic earliest-start
// scheduling of a duration realization, and mean disbursement profiles.
// All values are immutable after construction; operations are pure.

#include "rops/distributions.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rops {

struct TimeGrid {
    double t0 = 0.0;
    double horizon = 1.0;
    int n_nodes = 2; // number of intervals N; node times t0 + n*dt, n = 0..N

    double dt() const { return (horizon - t0) / n_nodes; }
    double node_time(int n) const { return t0 + n * dt(); }
};

struct TaskSpec {
    std::string id;
    std::string project_id;
    double allocated_cost = 0.0;
    double scheduled_duration = 1.0;
    TwoSidedSpec cost_width;    // multiplicative factors applied to mean increments
    DurationSpec duration_dist;
    std::vector<std::string> predecessors;
};

struct ParamSpec {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;
    double value = 0.0; // starting point, defaults to midpoint when unset
};

struct Binding {
    std::string parameter;
    std::string task;
    std::string field; // "scheduled_duration" or "allocated_cost"
};

struct Plan {
    std::vector<std::string> projects;
    std::vector<TaskSpec> tasks;
    TimeGrid grid;
    std::vector<ParamSpec> parameters;
    std::vector<Binding> bindings;

    int task_index(const std::string& id) const; // -1 when absent
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
    std::string joined() const;
};

struct ScheduleRealization {
    // indexed like plan.tasks
    std::vector<double> start;
    std::vector<double> finish;
};

ValidationReport validate_plan(const Plan& plan);

// every task after all its predecessors; ties broken by ascending task id
std::vector<int> topo_order(const Plan& plan);

// earliest-start schedule for one duration realization (indexed like tasks)
ScheduleRealization schedule_realization(const Plan& plan, const std::vector<double>& durations);

// mean disbursement per task and node: allocated cost spread uniformly over
// the task's active span, prorated by overlap with each node interval
// (t_{n-1}, t_n]; row sums equal allocated_cost exactly (the task's last
// active node absorbs the rounding residual). out[k][n] for n = 0..N with
// out[k][0] = 0. With truncate=false a finish beyond the horizon throws
// SimulationError; with truncate=true the beyond-horizon share is booked at
// node N.
std::vector<std::vector<double>> disbursement_profile(const Plan& plan,
                                                      const ScheduleRealization& schedule,
                                                      const TimeGrid& grid, bool truncate);

// plan with parameter values applied through the declared bindings:
// "scheduled_duration" scales the mean duration and its distribution,
// "allocated_cost" scales the task's cost
Plan apply_parameters(const Plan& plan, const std::vector<double>& values);

} // namespace rops
