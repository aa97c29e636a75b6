#include "rops/plan_model.hpp"

#include "rops/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace rops {

int Plan::task_index(const std::string& id) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
        if (tasks[i].id == id) return static_cast<int>(i);
    return -1;
}

std::string ValidationReport::joined() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) os << "; ";
        os << violations[i];
    }
    return os.str();
}

namespace {

// Kahn's algorithm with an id-ordered frontier. Returns indices in order;
// leftover (cyclic) task ids land in *cycle if the graph has one.
bool kahn_order(const Plan& plan, std::vector<int>* order, std::vector<std::string>* cycle) {
    const std::size_t n = plan.tasks.size();
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < n; ++i) index.emplace(plan.tasks[i].id, static_cast<int>(i));

    std::vector<int> indeg(n, 0);
    std::vector<std::vector<int>> succ(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& p : plan.tasks[i].predecessors) {
            auto it = index.find(p);
            if (it == index.end()) return false; // caller validates references first
            succ[it->second].push_back(static_cast<int>(i));
            ++indeg[i];
        }
    }

    auto cmp = [&](int a, int b) { return plan.tasks[a].id > plan.tasks[b].id; };
    std::priority_queue<int, std::vector<int>, decltype(cmp)> ready(cmp);
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push(static_cast<int>(i));

    order->clear();
    std::vector<bool> done(n, false);
    while (!ready.empty()) {
        const int k = ready.top();
        ready.pop();
        order->push_back(k);
        done[k] = true;
        for (int s : succ[k])
            if (--indeg[s] == 0) ready.push(s);
    }
    if (order->size() == n) return true;
    cycle->clear();
    for (std::size_t i = 0; i < n; ++i)
        if (!done[i]) cycle->push_back(plan.tasks[i].id);
    std::sort(cycle->begin(), cycle->end());
    return false;
}

} // namespace

ValidationReport validate_plan(const Plan& plan) {
    ValidationReport rep;
    auto add = [&](const std::string& v) { rep.violations.push_back(v); };

    if (plan.tasks.empty()) add("plan has no tasks");
    if (plan.grid.n_nodes < 2) add("grid needs at least 2 nodes");
    if (!(plan.grid.horizon > plan.grid.t0)) add("grid horizon must exceed t0");
    if (!std::isfinite(plan.grid.t0) || !std::isfinite(plan.grid.horizon))
        add("grid times must be finite");

    std::set<std::string> projects(plan.projects.begin(), plan.projects.end());
    if (projects.size() != plan.projects.size()) add("duplicate project ids");

    std::set<std::string> ids;
    bool refs_ok = true;
    for (const auto& t : plan.tasks) {
        if (!ids.insert(t.id).second) add("duplicate task id '" + t.id + "'");
        if (!projects.count(t.project_id))
            add("task '" + t.id + "' references unknown project '" + t.project_id + "'");
        if (t.allocated_cost < 0.0) add("task '" + t.id + "' has negative allocated_cost");
        if (!(t.scheduled_duration > 0.0))
            add("task '" + t.id + "' has nonpositive scheduled_duration");
        std::string e = check_duration(t.duration_dist);
        if (!e.empty()) add("task '" + t.id + "' duration spec: " + e);
        e = check_two_sided(t.cost_width);
        if (!e.empty()) add("task '" + t.id + "' cost_width spec: " + e);
    }
    for (const auto& t : plan.tasks)
        for (const auto& p : t.predecessors) {
            if (!ids.count(p)) {
                add("task '" + t.id + "' references missing predecessor '" + p + "'");
                refs_ok = false;
            }
            if (p == t.id) {
                add("task '" + t.id + "' lists itself as a predecessor");
                refs_ok = false;
            }
        }

    if (refs_ok && !plan.tasks.empty()) {
        std::vector<int> order;
        std::vector<std::string> cycle;
        if (!kahn_order(plan, &order, &cycle)) {
            std::string msg = "precedence cycle involving {";
            for (std::size_t i = 0; i < cycle.size(); ++i)
                msg += (i ? "," : "") + cycle[i];
            add(msg + "}");
        }
    }

    std::set<std::string> param_names;
    for (const auto& p : plan.parameters) {
        if (!param_names.insert(p.name).second) add("duplicate parameter '" + p.name + "'");
        if (!(p.lower < p.upper)) add("parameter '" + p.name + "' needs lower < upper");
        if (p.value < p.lower || p.value > p.upper)
            add("parameter '" + p.name + "' value outside its bounds");
    }
    for (const auto& b : plan.bindings) {
        if (!param_names.count(b.parameter))
            add("binding references unknown parameter '" + b.parameter + "'");
        if (!ids.count(b.task)) add("binding references unknown task '" + b.task + "'");
        if (b.field != "scheduled_duration" && b.field != "allocated_cost")
            add("binding field '" + b.field + "' not supported");
    }
    return rep;
}

std::vector<int> topo_order(const Plan& plan) {
    std::vector<int> order;
    std::vector<std::string> cycle;
    if (!kahn_order(plan, &order, &cycle)) {
        std::string msg = "topo_order: precedence cycle involving {";
        for (std::size_t i = 0; i < cycle.size(); ++i) msg += (i ? "," : "") + cycle[i];
        throw PlanError(msg + "}");
    }
    return order;
}

ScheduleRealization schedule_realization(const Plan& plan, const std::vector<double>& durations) {
    const std::size_t n = plan.tasks.size();
    if (durations.size() != n)
        throw PlanError("schedule_realization: need one duration per task");
    for (std::size_t i = 0; i < n; ++i)
        if (!(durations[i] > 0.0) || !std::isfinite(durations[i]))
            throw PlanError("schedule_realization: nonpositive duration for task '" +
                            plan.tasks[i].id + "'");

    std::map<std::string, int> index;
    for (std::size_t i = 0; i < n; ++i) index.emplace(plan.tasks[i].id, static_cast<int>(i));

    ScheduleRealization sched;
    sched.start.assign(n, 0.0);
    sched.finish.assign(n, 0.0);
    for (int k : topo_order(plan)) {
        double s = plan.grid.t0;
        for (const auto& p : plan.tasks[k].predecessors)
            s = std::max(s, sched.finish[index.at(p)]);
        sched.start[k] = s;
        sched.finish[k] = s + durations[k];
    }
    return sched;
}

std::vector<std::vector<double>> disbursement_profile(const Plan& plan,
                                                      const ScheduleRealization& schedule,
                                                      const TimeGrid& grid, bool truncate) {
    const std::size_t n = plan.tasks.size();
    if (schedule.start.size() != n || schedule.finish.size() != n)
        throw PlanError("disbursement_profile: schedule does not match plan");
    const int N = grid.n_nodes;
    const double dt = grid.dt();

    std::vector<std::vector<double>> out(n, std::vector<double>(N + 1, 0.0));
    for (std::size_t k = 0; k < n; ++k) {
        const double a = schedule.start[k];
        const double b = schedule.finish[k];
        const double cost = plan.tasks[k].allocated_cost;
        if (b > grid.horizon && !truncate)
            throw SimulationError("task '" + plan.tasks[k].id + "' finishes at " +
                                  std::to_string(b) + " beyond the horizon " +
                                  std::to_string(grid.horizon));
        if (cost == 0.0) continue;
        const double dur = b - a;
        int last = -1;
        double booked = 0.0;
        for (int node = 1; node <= N; ++node) {
            const double lo = grid.t0 + (node - 1) * dt;
            const double hi = node == N ? grid.horizon : grid.t0 + node * dt;
            const double overlap = std::min(b, hi) - std::max(a, lo);
            if (overlap <= 0.0) continue;
            const double amt = cost * (overlap / dur);
            out[k][node] = amt;
            booked += amt;
            last = node;
        }
        if (b > grid.horizon) last = N; // truncation books the beyond-horizon share at N
        if (last < 0) last = N;         // span beyond the grid entirely
        // the last active node absorbs the residual so the row sums to cost
        booked -= out[k][last];
        out[k][last] = cost - booked;
    }
    return out;
}

Plan apply_parameters(const Plan& plan, const std::vector<double>& values) {
    if (values.size() != plan.parameters.size())
        throw PlanError("apply_parameters: need one value per declared parameter");
    std::map<std::string, double> by_name;
    for (std::size_t i = 0; i < plan.parameters.size(); ++i)
        by_name[plan.parameters[i].name] = values[i];

    Plan scaled = plan;
    for (std::size_t i = 0; i < scaled.parameters.size(); ++i)
        scaled.parameters[i].value = values[i];
    for (const auto& b : plan.bindings) {
        auto it = by_name.find(b.parameter);
        if (it == by_name.end())
            throw PlanError("apply_parameters: unknown parameter '" + b.parameter + "'");
        const int k = scaled.task_index(b.task);
        if (k < 0) throw PlanError("apply_parameters: unknown task '" + b.task + "'");
        const double f = it->second;
        TaskSpec& t = scaled.tasks[k];
        if (b.field == "scheduled_duration") {
            t.scheduled_duration *= f;
            if (t.duration_dist.kind == DurationSpec::Kind::two_sided) {
                t.duration_dist.two_sided.mean *= f;
                t.duration_dist.two_sided.lower *= f;
                t.duration_dist.two_sided.upper *= f;
            } else {
                t.duration_dist.weibull.scale *= f;
                t.duration_dist.weibull.lower *= f;
                t.duration_dist.weibull.upper *= f;
            }
        } else if (b.field == "allocated_cost") {
            t.allocated_cost *= f;
        } else {
            throw PlanError("apply_parameters: unsupported binding field '" + b.field + "'");
        }
    }
    return scaled;
}

} // namespace rops
