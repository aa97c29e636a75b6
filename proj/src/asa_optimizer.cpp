#include "rops/asa_optimizer.hpp"

#include "rops/cpd_fit.hpp"
#include "rops/distributions.hpp"
#include "rops/errors.hpp"
#include "rops/shells.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>
#include <limits>
#include <utility>

namespace rops {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------- expression

// tiny arithmetic language over the pipeline outputs, compiled to RPN once
// per optimize() call
struct Expr {
    enum class Op : std::uint8_t { num, var, add, sub, mul, div, neg };
    struct Node {
        Op op;
        double value; // num
        int var;      // var
    };
    std::vector<Node> rpn;
    bool uses_option = false;

    double eval(const double* vars) const {
        double stack[64];
        int top = 0;
        for (const auto& n : rpn) {
            switch (n.op) {
            case Op::num: stack[top++] = n.value; break;
            case Op::var: stack[top++] = vars[n.var]; break;
            case Op::neg: stack[top - 1] = -stack[top - 1]; break;
            case Op::add: --top; stack[top - 1] += stack[top]; break;
            case Op::sub: --top; stack[top - 1] -= stack[top]; break;
            case Op::mul: --top; stack[top - 1] *= stack[top]; break;
            case Op::div: --top; stack[top - 1] /= stack[top]; break;
            }
        }
        return stack[0];
    }
};

constexpr const char* kVarNames[] = {"mean_final_S", "total_alloc", "T", "option_value"};
constexpr int kVarOption = 3;

class ExprParser {
  public:
    ExprParser(const std::string& text, Expr* out) : s_(text), out_(out) {}

    void run() {
        expr(0);
        skip();
        if (pos_ != s_.size()) fail("unexpected text");
        if (out_->rpn.empty()) fail("empty expression");
    }

  private:
    void expr(int depth) {
        if (depth > 64) fail("expression nested too deeply");
        term(depth);
        for (;;) {
            skip();
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
                const char op = s_[pos_++];
                term(depth);
                emit(op == '+' ? Expr::Op::add : Expr::Op::sub);
            } else {
                return;
            }
        }
    }

    void term(int depth) {
        factor(depth);
        for (;;) {
            skip();
            if (pos_ < s_.size() && (s_[pos_] == '*' || s_[pos_] == '/')) {
                const char op = s_[pos_++];
                factor(depth);
                emit(op == '*' ? Expr::Op::mul : Expr::Op::div);
            } else {
                return;
            }
        }
    }

    void factor(int depth) {
        skip();
        if (pos_ >= s_.size()) fail("expression ends early");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            expr(depth + 1);
            skip();
            if (pos_ >= s_.size() || s_[pos_] != ')') fail("missing ')'");
            ++pos_;
        } else if (c == '-') {
            ++pos_;
            factor(depth + 1);
            emit(Expr::Op::neg);
        } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s_.substr(pos_), &used);
            } catch (const std::exception&) {
                fail("bad number");
            }
            pos_ += used;
            out_->rpn.push_back({Expr::Op::num, v, 0});
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t end = pos_;
            while (end < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
                ++end;
            const std::string name = s_.substr(pos_, end - pos_);
            int id = -1;
            for (int i = 0; i < 4; ++i)
                if (name == kVarNames[i]) id = i;
            if (id < 0) fail("unknown variable '" + name + "'");
            if (id == kVarOption) out_->uses_option = true;
            pos_ = end;
            out_->rpn.push_back({Expr::Op::var, 0.0, id});
        } else {
            fail(std::string("unexpected character '") + c + "'");
        }
    }

    void emit(Expr::Op op) { out_->rpn.push_back({op, 0.0, 0}); }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
    }
    [[noreturn]] void fail(const std::string& why) {
        throw OptimError("objective expression: " + why + " (offset " +
                         std::to_string(pos_) + " of \"" + s_ + "\")");
    }

    const std::string& s_;
    Expr* out_;
    std::size_t pos_ = 0;
};

// ------------------------------------------------------------------- engine

struct EvalOut {
    double value = kInf;
    bool failed = false;
};

double scaled_distance(const std::vector<double>& a, const std::vector<double>& b,
                       const std::vector<double>& width) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = (a[i] - b[i]) / width[i];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace

double anneal_temperature(int k, double t0, double c, int dims) {
    if (k < 0 || !(t0 > 0.0) || !(c > 0.0) || dims < 1)
        throw OptimError("anneal_temperature: need k >= 0, t0 > 0, c > 0, dims >= 1");
    return t0 * std::exp(-c * std::pow(static_cast<double>(k), 1.0 / dims));
}

std::vector<double> propose(const std::vector<double>& current,
                            const std::vector<double>& temps,
                            const std::vector<double>& lower,
                            const std::vector<double>& upper, Rng& rng) {
    const std::size_t d = current.size();
    if (temps.size() != d || lower.size() != d || upper.size() != d)
        throw OptimError("propose: mismatched dimension counts");
    std::vector<double> cand(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double w = upper[i] - lower[i];
        double v = current[i];
        bool inside = false;
        for (int attempt = 0; attempt < 100 && !inside; ++attempt) {
            const double y = asa_inverse(rng.next_uniform(), temps[i]);
            v = current[i] + y * w;
            inside = v >= lower[i] && v <= upper[i];
        }
        cand[i] = inside ? v : std::clamp(v, lower[i], upper[i]);
    }
    return cand;
}

bool accept(double delta, double t_accept, double u) {
    if (!(t_accept > 0.0)) throw OptimError("accept: temperature must be positive");
    if (delta <= 0.0) return true;
    return u < std::exp(-delta / t_accept);
}

OptimResult anneal_minimize(const BoxObjective& objective, const AnnealConfig& config) {
    const int D = static_cast<int>(objective.lower.size());
    if (D < 1 || objective.upper.size() != static_cast<std::size_t>(D))
        throw OptimError("anneal_minimize: empty or mismatched parameter box");
    if (!objective.eval) throw OptimError("anneal_minimize: objective callback required");
    for (int i = 0; i < D; ++i)
        if (!(objective.lower[i] < objective.upper[i]))
            throw OptimError("anneal_minimize: parameter " + std::to_string(i) +
                             " has an empty range");
    if (!(config.t0_param > 0.0) || !(config.t0_accept > 0.0) || !(config.c > 0.0))
        throw OptimError("anneal_minimize: temperatures and scale must be positive");
    if (config.max_evals < 1 || config.reanneal_every < 1 || config.multi_min_k < 1 ||
        config.threads < 1 || !(config.multi_min_tol > 0.0))
        throw OptimError("anneal_minimize: counts must be positive");

    std::vector<double> width(D);
    for (int i = 0; i < D; ++i) width[i] = objective.upper[i] - objective.lower[i];

    std::vector<double> x(D);
    if (objective.start.empty()) {
        for (int i = 0; i < D; ++i) x[i] = 0.5 * (objective.lower[i] + objective.upper[i]);
    } else if (objective.start.size() == static_cast<std::size_t>(D)) {
        for (int i = 0; i < D; ++i)
            x[i] = std::clamp(objective.start[i], objective.lower[i], objective.upper[i]);
    } else {
        throw OptimError("anneal_minimize: start point has wrong dimension");
    }

    OptimResult res;
    res.trace.reserve(static_cast<std::size_t>(config.max_evals));

    auto raw_eval = [&objective](const std::vector<double>& p, int idx) -> EvalOut {
        try {
            const double v = objective.eval(p, idx);
            if (std::isfinite(v)) return {v, false};
        } catch (const std::exception&) {
        }
        return {kInf, true};
    };

    // long low-dimension runs drive exp(-c k^(1/D)) below the smallest
    // normal double; floor the working temperatures so the proposal and
    // acceptance laws stay defined (they degenerate gracefully at 1e-300)
    constexpr double kTempFloor = 1e-300;
    std::vector<double> tmul(D, 1.0); // reanneal multipliers, >= 1
    auto temps_at = [&](int k) {
        std::vector<double> t(D);
        const double base =
            std::max(anneal_temperature(k, config.t0_param, config.c, D), kTempFloor);
        for (int i = 0; i < D; ++i) t[i] = std::min(base * tmul[i], config.t0_param);
        return t;
    };

    auto insert_min = [&](const std::vector<double>& p, double v) {
        if (!std::isfinite(v)) return;
        res.multi_min.push_back({p, v});
        std::stable_sort(res.multi_min.begin(), res.multi_min.end(),
                         [](const MultiMinEntry& a, const MultiMinEntry& b) {
                             return a.value < b.value;
                         });
        std::vector<MultiMinEntry> kept;
        for (auto& e : res.multi_min) {
            bool separated = true;
            for (const auto& other : kept)
                if (scaled_distance(e.params, other.params, width) < config.multi_min_tol) {
                    separated = false;
                    break;
                }
            if (separated) kept.push_back(std::move(e));
            if (static_cast<int>(kept.size()) == config.multi_min_k) break;
        }
        res.multi_min = std::move(kept);
    };

    int k = 0;        // next eval index == current trace length
    int accepted = 0; // accepted moves so far
    int next_reanneal = config.reanneal_every;
    double fx = kInf;
    std::vector<double> best = x;
    double fbest = kInf;

    auto apply_row = [&](const std::vector<double>& p, const EvalOut& out, bool acc) {
        if (out.failed) ++res.failures;
        res.trace.push_back({k, p, out.value, acc, temps_at(k)});
        insert_min(p, out.value);
        if (out.value < fbest) {
            fbest = out.value;
            best = p;
        }
        ++k;
    };

    {
        const EvalOut out = raw_eval(x, 0);
        fx = out.value;
        apply_row(x, out, true);
    }

    while (k < config.max_evals) {
        if (accepted >= next_reanneal) {
            // sensitivity probes around the frozen current best; each probe
            // is a normal trace row (accepted = 0)
            const std::vector<double> ref = best;
            const double fref = fbest;
            std::vector<double> sens(D, 0.0);
            int probed = 0;
            for (int i = 0; i < D && k < config.max_evals; ++i) {
                double h = 1e-3 * width[i];
                if (ref[i] + h > objective.upper[i]) h = -h;
                std::vector<double> p = ref;
                p[i] += h;
                const EvalOut out = raw_eval(p, k);
                if (std::isfinite(out.value) && std::isfinite(fref))
                    sens[i] = std::fabs((out.value - fref) / h);
                apply_row(p, out, false);
                ++probed;
            }
            if (probed == D) {
                const double smax = *std::max_element(sens.begin(), sens.end());
                if (smax > 0.0)
                    for (int i = 0; i < D; ++i)
                        tmul[i] = smax / std::max(sens[i], 1e-6 * smax);
            }
            next_reanneal += config.reanneal_every;
            continue;
        }

        // propose a speculative batch from the current state; candidates are
        // applied in index order and everything after the first acceptance is
        // discarded unseen, so any batch size reproduces the sequential run
        const int batch = std::min(config.threads, config.max_evals - k);
        std::vector<std::vector<double>> cands(batch);
        std::vector<double> u_acc(batch);
        for (int j = 0; j < batch; ++j) {
            Rng rng = Rng::stream(config.seed, rngdom::anneal, static_cast<std::uint64_t>(k + j));
            cands[j] = propose(x, temps_at(k + j), objective.lower, objective.upper, rng);
            u_acc[j] = rng.next_uniform();
        }
        std::vector<EvalOut> outs(batch);
        if (batch == 1) {
            outs[0] = raw_eval(cands[0], k);
        } else {
            std::vector<std::future<EvalOut>> futs;
            futs.reserve(batch);
            for (int j = 0; j < batch; ++j)
                futs.push_back(std::async(std::launch::async, raw_eval,
                                          std::cref(cands[j]), k + j));
            for (int j = 0; j < batch; ++j) outs[j] = futs[j].get();
        }
        for (int j = 0; j < batch; ++j) {
            const double t_acc = std::max(
                anneal_temperature(accepted, config.t0_accept, config.c, D), kTempFloor);
            const double delta = outs[j].value - fx;
            const bool acc = accept(delta, t_acc, u_acc[j]);
            apply_row(cands[j], outs[j], acc);
            if (acc) {
                x = cands[j];
                fx = outs[j].value;
                ++accepted;
                break; // the rest of the batch was proposed from a stale state
            }
        }
    }

    res.evals = k;
    if (res.failures >= static_cast<std::uint64_t>(res.evals))
        throw OptimError("anneal_minimize: all " + std::to_string(res.evals) +
                         " objective evaluations failed");
    res.best_params = best;
    res.best_value = fbest;
    return res;
}

OptimResult optimize(const ObjectiveSpec& objective, const Plan& plan,
                     const AnnealConfig& config) {
    const auto report = validate_plan(plan);
    if (!report.ok()) throw PlanError("optimize: invalid plan: " + report.joined());
    if (plan.parameters.empty())
        throw OptimError("optimize: plan declares no parameters to optimize");

    Expr expr;
    if (objective.kind == ObjectiveSpec::Kind::custom) {
        if (objective.expression.empty())
            throw OptimError("optimize: custom objective needs an expression");
        ExprParser(objective.expression, &expr).run();
        if (expr.uses_option && !objective.option.payoff)
            throw OptimError(
                "optimize: expression references option_value but no option payoff "
                "is configured");
    }
    if (objective.n_middle < 1 || objective.n_inner < 1)
        throw OptimError("optimize: simulation counts must be positive");

    BoxObjective box;
    for (const auto& p : plan.parameters) {
        box.lower.push_back(p.lower);
        box.upper.push_back(p.upper);
        box.start.push_back(p.value == 0.0 ? 0.5 * (p.lower + p.upper) : p.value);
    }

    const double horizon_T = plan.grid.horizon - plan.grid.t0;
    const int levels = objective.tree_levels > 0 ? objective.tree_levels
                                                 : 20 * plan.grid.n_nodes;
    box.eval = [&plan, &objective, expr, horizon_T, levels,
                seed = config.seed](const std::vector<double>& params, int idx) {
        const Plan p = apply_parameters(plan, params);
        const std::uint64_t sim_seed =
            Rng::stream(seed, rngdom::objective, static_cast<std::uint64_t>(idx))
                .next_u64();
        SimOptions opts;
        opts.truncate = objective.truncate;
        const PathEnsemble ens =
            run_simulation(p, objective.n_middle, objective.n_inner, sim_seed, opts);

        double mean_final = 0.0;
        const int n = p.grid.n_nodes;
        for (std::size_t r = 0; r < ens.plan_S.rows; ++r)
            mean_final += ens.plan_S.at(r, n);
        mean_final /= static_cast<double>(ens.plan_S.rows);
        double total_alloc = 0.0;
        for (const auto& t : p.tasks) total_alloc += t.allocated_cost;

        switch (objective.kind) {
        case ObjectiveSpec::Kind::cost_over_T:
            return mean_final / horizon_T;
        case ObjectiveSpec::Kind::overrun_over_T:
            return (mean_final - total_alloc) / horizon_T;
        case ObjectiveSpec::Kind::custom:
            break;
        }
        double vars[4] = {mean_final, total_alloc, horizon_T, 0.0};
        if (expr.uses_option) {
            const PlanCpd cpd = fit_plan_cpd(ens, objective.order_f, objective.order_g);
            const TimeGrid fine{p.grid.t0, p.grid.horizon, levels};
            const Tree tree = build_tree(make_diffusion(cpd, fine), 0.0, fine);
            vars[3] = price_option(tree, objective.option);
        }
        return expr.eval(vars);
    };

    return anneal_minimize(box, config);
}

} // namespace rops
