// rops: simulate | fit | price | optimize | risk over a plan JSON file.
// Every verb writes a manifest plus its artifacts into --out; reruns with
// identical inputs reproduce the bytes (the manifest's timestamp aside).
// Exit codes: 0 ok, 1 plan violation, 2 I/O, 3 simulation, 4 pricing,
// 5 optimization, 70 unexpected.

#include "CLI11.hpp"

#include "rops/asa_optimizer.hpp"
#include "rops/copula_risk.hpp"
#include "rops/cpd_fit.hpp"
#include "rops/errors.hpp"
#include "rops/pathtree.hpp"
#include "rops/plan_json.hpp"
#include "rops/plan_model.hpp"
#include "rops/report_io.hpp"
#include "rops/shells.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace rops;

struct Common {
    std::string plan_path;
    std::string out_dir = "rops_out";
    std::uint64_t seed = 1;
    int threads = 1;
    int n_middle = 200;
    int n_inner = 20;
    bool truncate = false;
};

CLI::Option* add_common(CLI::App* sub, Common& c) {
    CLI::Option* plan = sub->add_option("--plan", c.plan_path, "plan JSON file");
    sub->add_option("--out", c.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", c.seed, "root RNG seed")->capture_default_str();
    sub->add_option("--threads", c.threads, "worker cap; results do not depend on it")
        ->envname("ROPS_THREADS")
        ->check(CLI::Range(1, 4096))
        ->capture_default_str();
    sub->add_option("--n-middle", c.n_middle, "duration scenarios")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--n-inner", c.n_inner, "cost paths per duration scenario")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_flag("--truncate", c.truncate, "book beyond-horizon cost at the final node");
    return plan;
}

std::string join(const std::string& dir, const char* name) {
    return (std::filesystem::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

Plan load_checked_plan(const std::string& path, std::string* digest) {
    const std::string text = read_file(path);
    *digest = hex64(fnv1a64(text.data(), text.size()));
    Plan plan = parse_plan_text(text, path);
    const auto report = validate_plan(plan);
    if (!report.ok()) throw PlanError("invalid plan '" + path + "': " + report.joined());
    return plan;
}

RunManifest base_manifest(const char* verb, const Common& c, const std::string& digest) {
    RunManifest m;
    m.command = verb;
    m.plan_path = c.plan_path;
    m.plan_digest = digest;
    m.seed = c.seed;
    m.n_middle = c.n_middle;
    m.n_inner = c.n_inner;
    m.threads = c.threads;
    m.truncate = c.truncate;
    m.timestamp = utc_timestamp_now();
    return m;
}

int cmd_simulate(const Common& c, int bins) {
    std::string digest;
    const Plan plan = load_checked_plan(c.plan_path, &digest);
    ensure_out_dir(c.out_dir);
    RunManifest m = base_manifest("simulate", c, digest);
    m.extra = {{"bins", std::to_string(bins)}};
    const std::string hex = manifest_digest(m);

    const PathEnsemble ens =
        run_simulation(plan, c.n_middle, c.n_inner, c.seed, {c.truncate, c.threads});
    write_manifest(join(c.out_dir, "manifest.json"), m);
    write_plan_paths_csv(join(c.out_dir, "ensemble_plan.csv"), ens, hex);
    write_project_paths_csv(join(c.out_dir, "ensemble_projects.csv"), ens, hex);
    write_histograms_csv(join(c.out_dir, "histograms.csv"),
                         build_histograms(ens, bins, HistogramMode::absolute), hex);
    return 0;
}

int cmd_fit(const Common& c, int order_f, int order_g, int bins) {
    std::string digest;
    const Plan plan = load_checked_plan(c.plan_path, &digest);
    ensure_out_dir(c.out_dir);
    RunManifest m = base_manifest("fit", c, digest);
    m.order_f = order_f;
    m.order_g = order_g;
    m.extra = {{"bins", std::to_string(bins)}};
    const std::string hex = manifest_digest(m);

    const PathEnsemble ens =
        run_simulation(plan, c.n_middle, c.n_inner, c.seed, {c.truncate, c.threads});
    const PlanCpd cpd = fit_plan_cpd(ens, order_f, order_g, {c.threads});
    write_manifest(join(c.out_dir, "manifest.json"), m);
    write_cpd_csv(join(c.out_dir, "cpd.csv"), cpd, hex);
    write_histograms_csv(join(c.out_dir, "histograms.csv"),
                         build_histograms(ens, bins, HistogramMode::absolute), hex);
    return 0;
}

struct PriceOpts {
    std::string cpd_path;
    double strike = 0.0;
    bool put = false;
    bool use_const = false;
    double payoff_const = 0.0;
    bool american = false;
    double rate = 0.0;
    int tree_levels = 0; // 0: 20 per plan node (500 in --test-bachelier)
    double s0 = 0.0;
    bool test_bachelier = false;
    int order_f = 1;
    int order_g = 1;
};

OptionSpec make_option(const PriceOpts& o) {
    OptionSpec opt;
    opt.discount_rate = o.rate;
    opt.exercise = o.american ? OptionSpec::Exercise::american
                              : OptionSpec::Exercise::european;
    if (o.use_const) {
        opt.payoff = [v = o.payoff_const](double) { return v; };
    } else if (o.put) {
        opt.payoff = [k = o.strike](double s) { return std::max(k - s, 0.0); };
    } else {
        opt.payoff = [k = o.strike](double s) { return std::max(s - k, 0.0); };
    }
    return opt;
}

int cmd_price(const Common& c, const PriceOpts& o) {
    DiffusionSpec spec;
    TimeGrid grid;
    std::string digest;
    PlanCpd cpd;
    int levels = o.tree_levels;

    if (o.test_bachelier) {
        // unit-diffusion driftless oracle on [0, 1]
        spec.f = [](double, int) { return 0.0; };
        spec.g = [](double, int) { return 1.0; };
        grid = TimeGrid{0.0, 1.0, levels > 0 ? levels : 500};
    } else if (!o.cpd_path.empty()) {
        cpd = load_cpd_csv(o.cpd_path);
        if (levels <= 0) levels = 20 * cpd.n_nodes();
        grid = TimeGrid{cpd.t0, cpd.t0 + cpd.dt * cpd.n_nodes(), levels};
        spec = make_diffusion(cpd, grid);
    } else {
        const Plan plan = load_checked_plan(c.plan_path, &digest);
        const PathEnsemble ens =
            run_simulation(plan, c.n_middle, c.n_inner, c.seed, {c.truncate, c.threads});
        cpd = fit_plan_cpd(ens, o.order_f, o.order_g, {c.threads});
        if (levels <= 0) levels = 20 * plan.grid.n_nodes;
        grid = TimeGrid{plan.grid.t0, plan.grid.horizon, levels};
        spec = make_diffusion(cpd, grid);
    }

    ensure_out_dir(c.out_dir);
    RunManifest m = base_manifest("price", c, digest);
    m.order_f = o.order_f;
    m.order_g = o.order_g;
    m.extra = {{"payoff", o.use_const ? "const" : (o.put ? "put" : "call")},
               {"strike", fmt_double(o.strike)},
               {"s0", fmt_double(o.s0)},
               {"rate", fmt_double(o.rate)},
               {"american", o.american ? "1" : "0"},
               {"tree_levels", std::to_string(grid.n_nodes)}};
    if (o.use_const) m.extra.push_back({"payoff_const", fmt_double(o.payoff_const)});
    if (!o.cpd_path.empty()) m.extra.push_back({"cpd", o.cpd_path});
    if (o.test_bachelier) m.extra.push_back({"test_bachelier", "1"});
    const std::string hex = manifest_digest(m);

    const OptionSpec opt = make_option(o);
    const GreeksReport rep = greeks(spec, o.s0, grid, opt);

    write_manifest(join(c.out_dir, "manifest.json"), m);
    write_option_report(join(c.out_dir, "option.json"), rep, hex);

    // convergence table: the full-size value plus coarser rebuilds
    std::vector<int> sizes;
    for (int frac : {8, 4, 2}) {
        const int n = std::max(2, grid.n_nodes / frac);
        if (sizes.empty() || sizes.back() != n) sizes.push_back(n);
    }
    std::ofstream conv(join(c.out_dir, "option_convergence.csv"), std::ios::binary);
    if (!conv) throw IoError("cannot open '" + join(c.out_dir, "option_convergence.csv") +
                             "' for writing");
    conv << "# manifest " << hex << "\nn_levels,value\n";
    for (int n : sizes) {
        if (n >= grid.n_nodes) continue;
        TimeGrid coarse = grid;
        coarse.n_nodes = n;
        const DiffusionSpec cspec =
            (o.test_bachelier || cpd.n_nodes() == 0) ? spec : make_diffusion(cpd, coarse);
        conv << n << ',' << fmt_double(price_option(build_tree(cspec, o.s0, coarse), opt))
             << '\n';
    }
    conv << grid.n_nodes << ',' << fmt_double(rep.value) << '\n';
    conv.flush();
    if (!conv) throw IoError("failed while writing option_convergence.csv");
    return 0;
}

struct OptimOpts {
    std::string objective = "cost_over_T";
    std::string expression; // non-empty selects the custom kind
    int max_evals = 1000;
    int reanneal_every = 50;
    int multi_min_k = 1;
    double multi_min_tol = 1e-2;
    double t0_param = 1.0;
    double t0_accept = 1.0;
    double cool_c = 1.0;
    bool test_quadratic = false;
    PriceOpts price; // pipeline settings for expressions using option_value
};

int cmd_optimize(const Common& c, const OptimOpts& o) {
    AnnealConfig config;
    config.t0_param = o.t0_param;
    config.t0_accept = o.t0_accept;
    config.c = o.cool_c;
    config.max_evals = o.max_evals;
    config.reanneal_every = o.reanneal_every;
    config.multi_min_k = o.multi_min_k;
    config.multi_min_tol = o.multi_min_tol;
    config.seed = c.seed;
    config.threads = c.threads;

    ensure_out_dir(c.out_dir);
    std::string digest;
    OptimResult res;
    std::vector<std::string> names;

    if (o.test_quadratic) {
        // known minimum at (0.5, -0.25) in [-2, 2]^2, objective value 0
        BoxObjective box;
        box.lower = {-2.0, -2.0};
        box.upper = {2.0, 2.0};
        box.eval = [](const std::vector<double>& x, int) {
            const double a = x[0] - 0.5;
            const double b = x[1] + 0.25;
            return a * a + b * b;
        };
        names = {"x0", "x1"};
        res = anneal_minimize(box, config);
    } else {
        const Plan plan = load_checked_plan(c.plan_path, &digest);
        ObjectiveSpec objective;
        if (!o.expression.empty()) {
            objective.kind = ObjectiveSpec::Kind::custom;
            objective.expression = o.expression;
        } else if (o.objective == "overrun_over_T") {
            objective.kind = ObjectiveSpec::Kind::overrun_over_T;
        } else {
            objective.kind = ObjectiveSpec::Kind::cost_over_T;
        }
        objective.n_middle = c.n_middle;
        objective.n_inner = c.n_inner;
        objective.truncate = c.truncate;
        objective.order_f = o.price.order_f;
        objective.order_g = o.price.order_g;
        objective.tree_levels = o.price.tree_levels;
        objective.option = make_option(o.price);
        for (const auto& p : plan.parameters) names.push_back(p.name);
        res = optimize(objective, plan, config);
    }

    RunManifest m = base_manifest("optimize", c, digest);
    m.extra = {{"objective", o.expression.empty() ? o.objective : "custom"},
               {"max_evals", std::to_string(o.max_evals)},
               {"reanneal_every", std::to_string(o.reanneal_every)},
               {"multi_min_k", std::to_string(o.multi_min_k)},
               {"multi_min_tol", fmt_double(o.multi_min_tol)},
               {"temp0_param", fmt_double(o.t0_param)},
               {"temp0_accept", fmt_double(o.t0_accept)},
               {"cool_c", fmt_double(o.cool_c)}};
    if (!o.expression.empty()) m.extra.push_back({"expression", o.expression});
    if (o.test_quadratic) m.extra.push_back({"test_quadratic", "1"});
    const std::string hex = manifest_digest(m);

    write_manifest(join(c.out_dir, "manifest.json"), m);
    write_optim_report(join(c.out_dir, "best.json"), res, names, hex);
    write_multi_min_csv(join(c.out_dir, "multi_min.csv"), res.multi_min, names, hex);
    write_trace_csv(join(c.out_dir, "trace.csv"), res.trace, names, hex);
    return 0;
}

int cmd_risk(const Common& c, const RiskOptions& opts) {
    std::string digest;
    const Plan plan = load_checked_plan(c.plan_path, &digest);
    ensure_out_dir(c.out_dir);
    RunManifest m = base_manifest("risk", c, digest);
    std::string quantiles;
    for (double q : opts.quantiles) {
        if (!quantiles.empty()) quantiles += ';';
        quantiles += fmt_double(q);
    }
    m.extra = {{"window_lo", std::to_string(opts.window_lo)},
               {"window_hi", std::to_string(opts.window_hi)},
               {"relative", opts.relative ? "1" : "0"},
               {"quantiles", quantiles}};
    const std::string hex = manifest_digest(m);

    const PathEnsemble ens =
        run_simulation(plan, c.n_middle, c.n_inner, c.seed, {c.truncate, c.threads});
    const RiskReport rep = project_risk(ens, opts);
    write_manifest(join(c.out_dir, "manifest.json"), m);
    write_risk_json(join(c.out_dir, "risk.json"), rep, hex);
    write_risk_audit_csv(join(c.out_dir, "audit.csv"), rep, hex);
    return 0;
}

int run(int argc, char** argv) {
    CLI::App app{"project-plan cost simulation, CPD fitting, real-option pricing, "
                 "annealing optimization and cross-project risk reports"};
    app.require_subcommand(1);

    Common c;
    int bins = 40;
    PriceOpts price;
    OptimOpts optim;
    RiskOptions risk;

    CLI::App* sim = app.add_subcommand("simulate", "run the shells, export path tables");
    add_common(sim, c)->required();
    sim->add_option("--bins", bins, "histogram bins per node")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    CLI::App* fit = app.add_subcommand("fit", "simulate and fit per-node drift/diffusion");
    add_common(fit, c)->required();
    fit->add_option("--order-f", price.order_f, "drift polynomial order")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    fit->add_option("--order-g", price.order_g, "diffusion polynomial order")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    fit->add_option("--bins", bins, "histogram bins per node")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    CLI::App* prc = app.add_subcommand("price", "value an option on the plan cost process");
    CLI::Option* prc_plan = add_common(prc, c);
    CLI::Option* prc_cpd =
        prc->add_option("--cpd", price.cpd_path, "price from an exported coefficient table");
    prc_cpd->excludes(prc_plan);
    prc->add_option("--strike", price.strike, "strike level K")->capture_default_str();
    CLI::Option* put = prc->add_flag("--put", price.put, "payoff max(K - S, 0)");
    prc->add_flag("--call", "payoff max(S - K, 0) (default)")->excludes(put);
    CLI::Option* pconst =
        prc->add_option("--payoff-const", price.payoff_const, "constant payoff value");
    prc->add_flag("--american", price.american, "early cancellation at every level");
    prc->add_option("--rate", price.rate, "continuous discount rate")->capture_default_str();
    prc->add_option("--tree-levels", price.tree_levels,
                    "valuation levels (default 20 per plan node)");
    prc->add_option("--s0", price.s0, "initial cost level")->capture_default_str();
    prc->add_option("--order-f", price.order_f, "drift order when fitting from a plan")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    prc->add_option("--order-g", price.order_g, "diffusion order when fitting from a plan")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    prc->add_flag("--test-bachelier", price.test_bachelier,
                  "price the unit-diffusion oracle instead of a plan");

    CLI::App* opt = app.add_subcommand("optimize", "anneal the plan's bounded parameters");
    add_common(opt, c);
    opt->add_option("--objective", optim.objective, "built-in objective")
        ->check(CLI::IsMember({"cost_over_T", "overrun_over_T"}))
        ->capture_default_str();
    opt->add_option("--expression", optim.expression,
                    "arithmetic over mean_final_S, total_alloc, T, option_value");
    opt->add_option("--max-evals", optim.max_evals)->check(CLI::PositiveNumber)
        ->capture_default_str();
    opt->add_option("--reanneal-every", optim.reanneal_every)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    opt->add_option("--multi-min-k", optim.multi_min_k)
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    opt->add_option("--multi-min-tol", optim.multi_min_tol)->capture_default_str();
    opt->add_option("--temp0-param", optim.t0_param)->capture_default_str();
    opt->add_option("--temp0-accept", optim.t0_accept)->capture_default_str();
    opt->add_option("--cool-c", optim.cool_c)->capture_default_str();
    opt->add_flag("--test-quadratic", optim.test_quadratic,
                  "anneal a known quadratic instead of a plan");
    opt->add_option("--strike", optim.price.strike, "strike for option_value expressions")
        ->capture_default_str();
    opt->add_flag("--put", optim.price.put, "put payoff for option_value expressions");
    opt->add_flag("--american", optim.price.american,
                  "american exercise for option_value expressions");
    opt->add_option("--rate", optim.price.rate)->capture_default_str();
    opt->add_option("--tree-levels", optim.price.tree_levels);
    opt->add_option("--order-f", optim.price.order_f)->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    opt->add_option("--order-g", optim.price.order_g)->check(CLI::NonNegativeNumber)
        ->capture_default_str();

    CLI::App* rsk = app.add_subcommand("risk", "rank cross-project tail risk");
    add_common(rsk, c)->required();
    rsk->add_option("--window-lo", risk.window_lo, "first node of the window")
        ->capture_default_str();
    rsk->add_option("--window-hi", risk.window_hi, "last node (0 = full horizon)")
        ->capture_default_str();
    rsk->add_flag("--relative", risk.relative, "analyze dS/S instead of dS");
    rsk->add_option("--quantiles", risk.quantiles, "tail levels, comma separated")
        ->delimiter(',')
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (sim->parsed()) return cmd_simulate(c, bins);
    if (fit->parsed()) return cmd_fit(c, price.order_f, price.order_g, bins);
    if (prc->parsed()) {
        price.use_const = pconst->count() > 0;
        if (!price.test_bachelier && price.cpd_path.empty() && c.plan_path.empty()) {
            std::cerr << "rops price: one of --plan, --cpd, --test-bachelier is required\n";
            return 64;
        }
        return cmd_price(c, price);
    }
    if (opt->parsed()) {
        if (!optim.test_quadratic && c.plan_path.empty()) {
            std::cerr << "rops optimize: --plan is required (or --test-quadratic)\n";
            return 64;
        }
        return cmd_optimize(c, optim);
    }
    if (rsk->parsed()) return cmd_risk(c, risk);
    return 64; // unreachable: require_subcommand(1)
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const PlanError& e) {
        std::cerr << "rops: " << e.what() << '\n';
        return 1;
    } catch (const IoError& e) {
        std::cerr << "rops: " << e.what() << '\n';
        return 2;
    } catch (const SimulationError& e) {
        std::cerr << "rops: " << e.what() << '\n';
        return 3;
    } catch (const PricingError& e) {
        std::cerr << "rops: " << e.what() << '\n';
        return 4;
    } catch (const OptimError& e) {
        std::cerr << "rops: " << e.what() << '\n';
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "rops: unexpected error: " << e.what() << '\n';
        return 70;
    }
}
