#pragma once

// Outer shell: adaptive simulated annealing over the plan's bounded
// parameters. Proposals draw per-dimension steps from the finite-range
// annealing law, temperatures follow T(k) = T0 exp(-c k^(1/D)), reannealing
// rescales per-dimension temperatures from one-sided objective
// sensitivities, and up to multi_min_k well-separated minima are retained
// alongside the best. Every objective evaluation becomes one trace row,
// sensitivity probes included.

#include "rops/pathtree.hpp"
#include "rops/plan_model.hpp"
#include "rops/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rops {

struct AnnealConfig {
    double t0_param = 1.0;  // initial proposal temperature
    double t0_accept = 1.0; // initial acceptance temperature
    double c = 1.0;         // schedule scale
    int max_evals = 1000;
    int reanneal_every = 50; // accepted moves between sensitivity rescalings
    int multi_min_k = 1;
    double multi_min_tol = 1e-2; // box-scaled separation between retained minima
    std::uint64_t seed = 0;
    int threads = 1; // speculative candidate evaluations per batch
};

struct ObjectiveSpec {
    enum class Kind { cost_over_T, overrun_over_T, custom };

    Kind kind = Kind::cost_over_T;
    // custom only: arithmetic (+ - * / and parentheses) over mean_final_S,
    // total_alloc, T, option_value
    std::string expression;

    int n_middle = 200;
    int n_inner = 20;
    bool truncate = false;

    // pipeline for expressions referencing option_value: fit orders, tree
    // levels (0 = 20 per plan node), and the option priced at S0 = 0
    int order_f = 1, order_g = 1;
    int tree_levels = 0;
    OptionSpec option;
};

struct TraceRow {
    int eval = 0;
    std::vector<double> params;
    double value = 0.0;
    bool accepted = false;
    std::vector<double> temps; // per-dimension proposal temperatures
};

struct MultiMinEntry {
    std::vector<double> params;
    double value = 0.0;
};

struct OptimResult {
    std::vector<double> best_params;
    double best_value = 0.0;
    std::vector<MultiMinEntry> multi_min;
    int evals = 0;
    std::uint64_t failures = 0;
    std::vector<TraceRow> trace;
};

double anneal_temperature(int k, double t0, double c, int dims);

// one candidate: per dimension an annealing-law step scaled by the box
// width, redrawn (up to 100 times, then clipped) while out of bounds
std::vector<double> propose(const std::vector<double>& current,
                            const std::vector<double>& temps,
                            const std::vector<double>& lower,
                            const std::vector<double>& upper, Rng& rng);

bool accept(double delta, double t_accept, double u);

// Annealing engine over an arbitrary box-bounded objective. The callback
// receives the candidate and its eval index (for per-candidate seeding) and
// must be safe to call concurrently when threads > 1. Throwing or
// non-finite evaluations count as failures and price as +inf; if every
// evaluation fails the engine throws with the tally.
struct BoxObjective {
    std::function<double(const std::vector<double>&, int eval_index)> eval;
    std::vector<double> lower, upper;
    std::vector<double> start; // empty: box midpoints
};

OptimResult anneal_minimize(const BoxObjective& objective, const AnnealConfig& config);

// plan pipeline objective: apply candidate parameters through the plan's
// bindings, simulate with an eval-indexed seed, reduce per ObjectiveSpec
OptimResult optimize(const ObjectiveSpec& objective, const Plan& plan,
                     const AnnealConfig& config);

} // namespace rops
