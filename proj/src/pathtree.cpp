#include "rops/pathtree.hpp"

#include "rops/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <memory>
#include <sstream>
#include <string>

namespace rops {

namespace {

std::string state_tag(double S, int level) {
    std::ostringstream os;
    os << "S=" << S << ", node=" << level;
    return os.str();
}

// Ladder of states shared by every level. Gaps are stored as computed --
// positions are prefix sums -- so a constant diffusion yields bitwise-equal
// gaps everywhere and exact 1/2 branch probabilities under zero drift.
class Ladder {
  public:
    Ladder(const DiffusionSpec& spec, double s0, int n_levels, double sqrt_dt)
        : spec_(spec), n_levels_(n_levels), sd_(sqrt_dt) {
        pos_up_.push_back(s0);
        pos_dn_.push_back(s0);
        windowed_ = spec.support_lo.size() >= static_cast<std::size_t>(n_levels) &&
                    spec.support_hi.size() >= static_cast<std::size_t>(n_levels);
        if (windowed_) dist_.resize(n_levels_);
    }

    double pos(int j) const { return j >= 0 ? pos_up_[j] : pos_dn_[-j]; }

    // gap between rungs j and j+1
    double gap(int j) {
        if (j >= 0) {
            while (static_cast<int>(gap_up_.size()) <= j) extend_up();
            return gap_up_[j];
        }
        while (static_cast<int>(gap_dn_.size()) < -j) extend_dn();
        return gap_dn_[-j - 1];
    }

    void take_positions(std::vector<double>* up, std::vector<double>* dn) {
        *up = std::move(pos_up_);
        *dn = std::move(pos_dn_);
    }

  private:
    double checked_g(double S, int n) {
        const double gv = spec_.g(S, n);
        if (!std::isfinite(gv) || !(gv > 0.0))
            throw PricingError("build_tree: diffusion not positive at " +
                               state_tag(S, n));
        return gv;
    }

    // Rung spacing at S: median of g(S, n) over levels. When the spec carries
    // fitted-support bands, only levels whose band (widened by a quarter of
    // its width per side) contains S vote -- a level's polynomial means
    // nothing far outside its own data, and letting its extrapolated values
    // into the median collapses or inflates the ladder where the process
    // never visits it. If no band contains S, the nearest bands vote.
    double gbar(double S) {
        scratch_.clear();
        if (windowed_) {
            double best = std::numeric_limits<double>::infinity();
            for (int n = 0; n < n_levels_; ++n) {
                const double lo = spec_.support_lo[n], hi = spec_.support_hi[n];
                const double margin = 0.25 * (hi - lo);
                const double wl = lo - margin, wh = hi + margin;
                const double d = S < wl ? wl - S : (S > wh ? S - wh : 0.0);
                dist_[n] = d;
                best = std::min(best, d);
            }
            const double cut = best + 1e-9 * (1.0 + best);
            for (int n = 0; n < n_levels_; ++n)
                if (dist_[n] <= cut) scratch_.push_back(checked_g(S, n));
            // degenerate (zero-variance) slices carry no spacing information;
            // drop them unless the whole window is degenerate
            double vmax = 0.0;
            for (double v : scratch_) vmax = std::max(vmax, v);
            std::size_t k = 0;
            for (double v : scratch_)
                if (v > 1e-9 * vmax) scratch_[k++] = v;
            if (k > 0) scratch_.resize(k);
        } else {
            for (int n = 0; n < n_levels_; ++n) scratch_.push_back(checked_g(S, n));
        }
        std::sort(scratch_.begin(), scratch_.end());
        const std::size_t m = scratch_.size() / 2;
        return scratch_.size() % 2 ? scratch_[m]
                                   : 0.5 * (scratch_[m - 1] + scratch_[m]);
    }

    double rk4_gap(double S, double dir) {
        const double k1 = gbar(S) * sd_;
        const double k2 = gbar(S + dir * 0.5 * k1) * sd_;
        const double k3 = gbar(S + dir * 0.5 * k2) * sd_;
        const double k4 = gbar(S + dir * k3) * sd_;
        const double gap = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        if (!std::isfinite(gap) || !(gap > 0.0))
            throw PricingError("build_tree: ladder spacing collapsed near S=" +
                               std::to_string(S));
        return gap;
    }

    void extend_up() {
        const double S = pos_up_.back();
        const double g = rk4_gap(S, +1.0);
        gap_up_.push_back(g);
        pos_up_.push_back(S + g);
    }

    void extend_dn() {
        const double S = pos_dn_.back();
        const double g = rk4_gap(S, -1.0);
        gap_dn_.push_back(g);
        pos_dn_.push_back(S - g);
    }

    const DiffusionSpec& spec_;
    int n_levels_;
    double sd_;
    bool windowed_ = false;
    std::vector<double> pos_up_, pos_dn_, gap_up_, gap_dn_, scratch_, dist_;
};

} // namespace

DiffusionSpec make_diffusion(const PlanCpd& cpd, const TimeGrid& tree_grid) {
    if (cpd.n_nodes() < 1) throw PricingError("make_diffusion: fit has no nodes");
    if (!(cpd.dt > 0.0)) throw PricingError("make_diffusion: fit has no time step");
    const int N = tree_grid.n_nodes;
    if (N < 1) throw PricingError("make_diffusion: tree grid needs at least one step");

    auto shared = std::make_shared<const PlanCpd>(cpd);
    auto nodes = std::make_shared<std::vector<int>>();
    auto floors = std::make_shared<std::vector<double>>();
    nodes->reserve(N);
    floors->reserve(N);
    DiffusionSpec spec;
    const double dtp = tree_grid.dt();
    for (int lvl = 0; lvl < N; ++lvl) {
        // level lvl covers (t, t + dt']; pick the slice whose accrual
        // interval contains it, holding the last slice past the fitted span
        const double t = tree_grid.t0 + lvl * dtp;
        int node = static_cast<int>(std::floor((t - cpd.t0) / cpd.dt)) + 1;
        node = std::clamp(node, 1, cpd.n_nodes());
        nodes->push_back(node);
        const auto& ref = shared->s_ref[node - 1];
        floors->push_back(0.01 * shared->diffusion(node, ref.mean));
        spec.support_lo.push_back(ref.min);
        spec.support_hi.push_back(ref.max);
    }
    spec.f = [shared, nodes](double S, int level) {
        const int i = std::clamp(level, 0, static_cast<int>(nodes->size()) - 1);
        return shared->drift((*nodes)[i], S);
    };
    spec.g = [shared, nodes, floors](double S, int level) {
        const int i = std::clamp(level, 0, static_cast<int>(nodes->size()) - 1);
        return std::max(shared->diffusion((*nodes)[i], S), (*floors)[i]);
    };
    return spec;
}

DiffusionSpec make_diffusion(const PlanCpd& cpd) {
    TimeGrid grid;
    grid.t0 = cpd.t0;
    grid.horizon = cpd.t0 + cpd.dt * cpd.n_nodes();
    grid.n_nodes = cpd.n_nodes();
    return make_diffusion(cpd, grid);
}

Tree build_tree(const DiffusionSpec& spec, double S0, const TimeGrid& grid) {
    if (!spec.f || !spec.g) throw PricingError("build_tree: drift and diffusion required");
    const int N = grid.n_nodes;
    if (N < 1) throw PricingError("build_tree: grid needs at least one step");
    if (!(grid.horizon > grid.t0)) throw PricingError("build_tree: empty time span");

    Tree tree;
    tree.s0 = S0;
    tree.t0 = grid.t0;
    tree.dt = grid.dt();
    tree.n_levels = N;
    tree.lo.assign(N + 1, 0);
    tree.hi.assign(N + 1, 0);
    tree.pup.resize(N);
    tree.up.resize(N);
    tree.dn.resize(N);

    const double sd = std::sqrt(tree.dt);
    Ladder ladder(spec, S0, N, sd);
    const bool has_support =
        !spec.support_lo.empty() && spec.support_lo.size() == spec.support_hi.size();

    std::vector<int> child_up, child_dn;
    for (int n = 0; n < N; ++n) {
        const int w = tree.width(n);
        tree.pup[n].resize(w);
        child_up.assign(w, 0);
        child_dn.assign(w, 0);
        int next_lo = 0, next_hi = 0;
        for (int i = 0; i < w; ++i) {
            const int j = tree.lo[n] + i;
            const double S = ladder.pos(j);
            const double fv = spec.f(S, n);
            const double gv = spec.g(S, n);
            if (!std::isfinite(fv))
                throw PricingError("build_tree: non-finite drift at " + state_tag(S, n));
            if (!std::isfinite(gv) || !(gv > 0.0))
                throw PricingError("build_tree: diffusion not positive at " +
                                   state_tag(S, n));
            if (has_support && n < static_cast<int>(spec.support_lo.size()) &&
                (S < spec.support_lo[n] || S > spec.support_hi[n]))
                ++tree.extrapolation_count;

            // a rung-walk this long means the ladder spacing collapsed
            // relative to the local diffusion; fail loudly instead of
            // drowning in an astronomically long (but finite) walk
            constexpr int kMaxWalk = 1 << 20;
            const double target = gv * sd;
            int mu = 1;
            double du = ladder.gap(j);
            while (du < target) {
                const double nxt = du + ladder.gap(j + mu);
                if (std::fabs(nxt - target) < std::fabs(du - target)) {
                    du = nxt;
                    if (++mu > kMaxWalk)
                        throw PricingError(
                            "build_tree: ladder spacing collapsed below the local "
                            "diffusion at " + state_tag(S, n));
                } else {
                    break;
                }
            }
            int md = 1;
            double dd = ladder.gap(j - 1);
            while (dd < target) {
                const double nxt = dd + ladder.gap(j - md - 1);
                if (std::fabs(nxt - target) < std::fabs(dd - target)) {
                    dd = nxt;
                    if (++md > kMaxWalk)
                        throw PricingError(
                            "build_tree: ladder spacing collapsed below the local "
                            "diffusion at " + state_tag(S, n));
                } else {
                    break;
                }
            }

            double p = (fv * tree.dt + dd) / (dd + du);
            if (p < 0.0) {
                p = 0.0;
                ++tree.clamp_count;
            } else if (p > 1.0) {
                p = 1.0;
                ++tree.clamp_count;
            }
            tree.pup[n][i] = p;
            child_up[i] = j + mu;
            child_dn[i] = j - md;
            if (i == 0 || j - md < next_lo) next_lo = j - md;
            if (i == 0 || j + mu > next_hi) next_hi = j + mu;
        }
        tree.lo[n + 1] = next_lo;
        tree.hi[n + 1] = next_hi;
        tree.up[n].resize(w);
        tree.dn[n].resize(w);
        for (int i = 0; i < w; ++i) {
            tree.up[n][i] = static_cast<std::int32_t>(child_up[i] - next_lo);
            tree.dn[n][i] = static_cast<std::int32_t>(child_dn[i] - next_lo);
        }
    }
    ladder.take_positions(&tree.pos_up, &tree.pos_dn);
    return tree;
}

double price_option(const Tree& tree, const OptionSpec& opt) {
    if (!opt.payoff) throw PricingError("price_option: payoff required");
    const int N = tree.n_levels;
    if (N < 1 || tree.lo.size() != static_cast<std::size_t>(N) + 1)
        throw PricingError("price_option: tree not built");

    std::vector<double> next(tree.width(N)), cur;
    for (int i = 0; i < tree.width(N); ++i) {
        next[i] = opt.payoff(tree.state(N, i));
        if (!std::isfinite(next[i]))
            throw PricingError("price_option: non-finite payoff at " +
                               state_tag(tree.state(N, i), N));
    }

    const double disc = std::exp(-opt.discount_rate * tree.dt);
    const bool american = opt.exercise == OptionSpec::Exercise::american;
    const auto& ops = kernels::active_ops();
    for (int n = N - 1; n >= 0; --n) {
        const int w = tree.width(n);
        cur.resize(w);
        ops.backward_step(next.data(), tree.pup[n].data(), tree.up[n].data(),
                          tree.dn[n].data(), disc, cur.data(), w);
        if (american) {
            for (int i = 0; i < w; ++i) {
                const double S = tree.state(n, i);
                const double ev = opt.early_value ? opt.early_value(S, n) : opt.payoff(S);
                if (!std::isfinite(ev))
                    throw PricingError("price_option: non-finite early value at " +
                                       state_tag(S, n));
                cur[i] = std::max(cur[i], ev);
            }
        }
        std::swap(next, cur);
    }
    return next[0];
}

GreeksReport greeks(const DiffusionSpec& spec, double S0, const TimeGrid& grid,
                    const OptionSpec& opt, const GreekBumps& bumps) {
    const double span = grid.horizon - grid.t0;
    const double hs = std::max(bumps.rel * std::fabs(S0), bumps.abs_floor);
    const double ht = std::min(std::max(bumps.rel * span, bumps.abs_floor), 0.5 * span);
    const double hg = std::max(bumps.rel, bumps.abs_floor);
    const double hr = std::max(bumps.rel * std::fabs(opt.discount_rate), bumps.abs_floor);

    auto scaled = [&spec](double scale) {
        DiffusionSpec s = spec;
        auto inner = spec.g;
        s.g = [inner, scale](double S, int n) { return scale * inner(S, n); };
        return s;
    };

    // the nine pricings are independent pure computations; run them in parallel
    auto run = [&](const char* greek, DiffusionSpec sp, double s0, TimeGrid gr,
                   double rate) {
        return std::async(std::launch::async, [greek, sp = std::move(sp), s0, gr, rate,
                                               &opt]() {
            OptionSpec o = opt;
            o.discount_rate = rate;
            try {
                Tree t = build_tree(sp, s0, gr);
                return price_option(t, o);
            } catch (const std::exception& e) {
                throw PricingError(std::string("greeks: ") + greek + " bump failed: " +
                                   e.what());
            }
        });
    };

    const double r = opt.discount_rate;
    TimeGrid fwd = grid;
    fwd.t0 = grid.t0 + ht;

    auto f_base = std::async(std::launch::async, [&] {
        Tree t = build_tree(spec, S0, grid);
        const double v = price_option(t, opt);
        return std::make_tuple(v, t.clamp_count, t.extrapolation_count);
    });
    auto f_su = run("delta", spec, S0 + hs, grid, r);
    auto f_sd = run("delta", spec, S0 - hs, grid, r);
    auto f_t = run("theta", spec, S0, fwd, r);
    auto f_gu = run("vega", scaled(1.0 + hg), S0, grid, r);
    auto f_gd = run("vega", scaled(1.0 - hg), S0, grid, r);
    auto f_ru = run("rho", spec, S0, grid, r + hr);
    auto f_rd = run("rho", spec, S0, grid, r - hr);

    GreeksReport rep;
    const auto [v0, clamps, extrap] = f_base.get();
    rep.value = v0;
    rep.clamp_count = clamps;
    rep.extrapolation_count = extrap;
    rep.n_levels = grid.n_nodes;
    const double vu = f_su.get(), vd = f_sd.get();
    rep.delta = (vu - vd) / (2.0 * hs);
    rep.gamma = (vu - 2.0 * v0 + vd) / (hs * hs);
    rep.theta = (f_t.get() - v0) / ht;
    rep.vega = (f_gu.get() - f_gd.get()) / (2.0 * hg);
    rep.rho = (f_ru.get() - f_rd.get()) / (2.0 * hr);
    return rep;
}

} // namespace rops
