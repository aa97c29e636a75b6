#include "rops/cpd_fit.hpp"

#include "rops/errors.hpp"
#include "rops/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace rops {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double poly_eval(const double* c, std::size_t n, double x) {
    double acc = c[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) acc = std::fma(acc, x, c[i]);
    return acc;
}

// ---- weighted polynomial least squares in a centered/scaled variable ----
//
// Fitting x^p directly is ill-conditioned once S reaches the hundreds, so the
// normal equations are formed in z = (x - mu)/sigma and the solution expanded
// back to raw-S coefficients by Horner composition.

bool solve_normal(std::vector<double>& a, std::vector<double>& b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
        double scale = 0.0;
        for (int r = 0; r < n; ++r) scale = std::max(scale, std::fabs(a[r * n + col]));
        if (std::fabs(a[piv * n + col]) <= 1e-12 * std::max(scale, 1e-300)) return false;
        if (piv != col) {
            for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        for (int r = col + 1; r < n; ++r) {
            const double m = a[r * n + col] / a[col * n + col];
            for (int c = col; c < n; ++c) a[r * n + c] -= m * a[col * n + c];
            b[r] -= m * b[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < n; ++c) acc -= a[r * n + c] * b[c];
        b[r] = acc / a[r * n + r];
    }
    return true;
}

// coefficients of p((x - mu)/sigma) in powers of x
std::vector<double> expand_scaled(const std::vector<double>& cz, double mu, double sigma) {
    std::vector<double> out(1, 0.0);
    for (std::size_t k = cz.size(); k-- > 0;) {
        // out <- out * (x - mu)/sigma + cz[k]
        std::vector<double> next(out.size() + 1, 0.0);
        for (std::size_t j = 0; j < out.size(); ++j) {
            next[j + 1] += out[j] / sigma;
            next[j] -= out[j] * mu / sigma;
        }
        next[0] += cz[k];
        out = std::move(next);
    }
    out.resize(cz.size(), 0.0);
    return out;
}

bool fit_weighted_poly(const std::vector<double>& centers, const std::vector<double>& values,
                       const std::vector<double>& weights, int order,
                       std::vector<double>* coeffs) {
    const int n = order + 1;
    double mu = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
        mu += weights[i] * centers[i];
        wsum += weights[i];
    }
    mu /= wsum;
    double var = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i)
        var += weights[i] * (centers[i] - mu) * (centers[i] - mu);
    var /= wsum;
    const double sigma = std::sqrt(var);
    if (order > 0 && !(sigma > 0.0)) return false;
    const double sc = order > 0 ? sigma : 1.0;

    std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0), b(n, 0.0), phi(n);
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const double z = (centers[i] - mu) / sc;
        phi[0] = 1.0;
        for (int p = 1; p < n; ++p) phi[p] = phi[p - 1] * z;
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) a[r * n + c] += weights[i] * phi[r] * phi[c];
            b[r] += weights[i] * phi[r] * values[i];
        }
    }
    if (!solve_normal(a, b, n)) return false;
    *coeffs = expand_scaled(b, mu, sc);
    return true;
}

// ---- Nelder-Mead over the coefficient vector ----

template <class F>
std::vector<double> nelder_mead(F&& fn, std::vector<double> x0, const std::vector<double>& step,
                                int max_iter, double* best_out) {
    const int dim = static_cast<int>(x0.size());
    std::vector<std::vector<double>> pts(dim + 1, x0);
    for (int i = 0; i < dim; ++i) pts[i + 1][i] += step[i];
    std::vector<double> fv(dim + 1);
    for (int i = 0; i <= dim; ++i) fv[i] = fn(pts[i]);

    std::vector<int> ord(dim + 1);
    std::vector<double> centroid(dim), xr(dim), xe(dim), xc(dim);
    for (int iter = 0; iter < max_iter; ++iter) {
        std::iota(ord.begin(), ord.end(), 0);
        std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const int best = ord[0], worst = ord[dim], second = ord[dim - 1];
        if (fv[worst] - fv[best] <= 1e-10 * (1.0 + std::fabs(fv[best]))) break;

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (int i = 0; i <= dim; ++i) {
            if (ord[i] == worst) continue;
            for (int d = 0; d < dim; ++d) centroid[d] += pts[ord[i]][d];
        }
        for (int d = 0; d < dim; ++d) centroid[d] /= dim;

        for (int d = 0; d < dim; ++d) xr[d] = centroid[d] + (centroid[d] - pts[worst][d]);
        const double fr = fn(xr);
        if (fr < fv[ord[0]]) {
            for (int d = 0; d < dim; ++d) xe[d] = centroid[d] + 2.0 * (centroid[d] - pts[worst][d]);
            const double fe = fn(xe);
            if (fe < fr) {
                pts[worst] = xe;
                fv[worst] = fe;
            } else {
                pts[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            pts[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        if (outside)
            for (int d = 0; d < dim; ++d) xc[d] = centroid[d] + 0.5 * (xr[d] - centroid[d]);
        else
            for (int d = 0; d < dim; ++d) xc[d] = centroid[d] + 0.5 * (pts[worst][d] - centroid[d]);
        const double fc = fn(xc);
        if (fc < (outside ? fr : fv[worst])) {
            pts[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (int i = 0; i <= dim; ++i) { // shrink toward the best vertex
            if (ord[i] == best) continue;
            for (int d = 0; d < dim; ++d)
                pts[ord[i]][d] = pts[best][d] + 0.5 * (pts[ord[i]][d] - pts[best][d]);
            fv[ord[i]] = fn(pts[ord[i]]);
        }
    }
    int best = 0;
    for (int i = 1; i <= dim; ++i)
        if (fv[i] < fv[best]) best = i;
    *best_out = fv[best];
    return pts[best];
}

} // namespace

std::vector<SliceHistogram> build_histograms(const PathEnsemble& ens, int bins,
                                             HistogramMode mode) {
    if (bins < 5) throw SimulationError("build_histograms: need at least 5 bins");
    if (ens.plan_dS.rows == 0 || ens.plan_dS.cols < 2)
        throw SimulationError("build_histograms: empty ensemble");

    const int N = static_cast<int>(ens.plan_dS.cols) - 1;
    const std::size_t rows = ens.plan_dS.rows;
    std::vector<SliceHistogram> out;
    out.reserve(N);
    std::vector<double> samples;
    samples.reserve(rows);

    for (int n = 1; n <= N; ++n) {
        SliceHistogram h;
        h.node = n;
        h.t = ens.grid.node_time(n);
        samples.clear();
        for (std::size_t r = 0; r < rows; ++r) {
            const double ds = ens.plan_dS.at(r, n);
            if (mode == HistogramMode::relative) {
                const double s = ens.plan_S.at(r, n - 1);
                if (s <= 0.0) {
                    ++h.excluded;
                    continue;
                }
                samples.push_back(ds / s);
            } else {
                samples.push_back(ds);
            }
        }
        h.n_samples = samples.size();
        if (samples.empty()) {
            out.push_back(std::move(h));
            continue;
        }

        double lo = 0.0, hi = 0.0;
        kernels::active_ops().minmax(samples.data(), samples.size(), &lo, &hi);
        if (lo == hi) {
            const double eps = std::max(1e-9, 1e-9 * std::fabs(lo));
            h.bin_edges = {lo - eps, lo + eps};
            h.mass = {1.0};
            h.deterministic = true;
            out.push_back(std::move(h));
            continue;
        }

        h.bin_edges.resize(bins + 1);
        for (int b = 0; b <= bins; ++b)
            h.bin_edges[b] = lo + (hi - lo) * static_cast<double>(b) / bins;
        h.bin_edges[bins] = hi;
        std::vector<std::uint64_t> counts(bins, 0);
        for (double x : samples) {
            int b = static_cast<int>((x - lo) / (hi - lo) * bins);
            b = std::clamp(b, 0, bins - 1);
            ++counts[b];
        }
        h.mass.resize(bins);
        for (int b = 0; b < bins; ++b)
            h.mass[b] = static_cast<double>(counts[b]) / static_cast<double>(samples.size());
        out.push_back(std::move(h));
    }
    return out;
}

SliceFit fit_slice(const std::vector<double>& ds, const std::vector<double>& s_prev,
                   int order_f, int order_g, double dt) {
    if (ds.size() != s_prev.size())
        throw SimulationError("fit_slice: increment and level vectors differ in length");
    if (ds.size() < 30) throw SimulationError("fit_slice: need at least 30 samples");
    if (!(dt > 0.0)) throw SimulationError("fit_slice: dt must be positive");
    if (order_f < 0 || order_g < 0) throw SimulationError("fit_slice: negative order");
    const std::size_t n = ds.size();
    const auto& ops = kernels::active_ops();

    SliceFit fit;
    fit.n_samples = n;
    fit.f_coeffs.assign(order_f + 1, 0.0);
    fit.g_coeffs.assign(order_g + 1, 0.0);

    double mean_ds = 0.0, var_ds = 0.0;
    ops.mean_var(ds.data(), n, &mean_ds, &var_ds);
    const double sd_ds = std::sqrt(std::max(var_ds, 0.0));
    fit.g_floor = sd_ds > 0.0 ? 1e-9 * sd_ds : 1e-12;
    fit.deterministic = sd_ds == 0.0;

    // ---- stage 1: moment estimates over quantile buckets of s_prev ----
    const int n_buckets = std::max(order_f, order_g) + 2;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s_prev[a] < s_prev[b]; });
    std::size_t distinct = n ? 1 : 0;
    for (std::size_t i = 1; i < n; ++i)
        if (s_prev[idx[i]] != s_prev[idx[i - 1]]) ++distinct;

    bool fitted = false;
    if (!fit.deterministic && distinct >= static_cast<std::size_t>(n_buckets)) {
        std::vector<double> centers, fhat, ghat, weights, scratch;
        for (int b = 0; b < n_buckets; ++b) {
            const std::size_t a = n * static_cast<std::size_t>(b) / n_buckets;
            const std::size_t e = n * static_cast<std::size_t>(b + 1) / n_buckets;
            if (e <= a) continue;
            scratch.clear();
            double c = 0.0;
            for (std::size_t i = a; i < e; ++i) {
                scratch.push_back(ds[idx[i]]);
                c += s_prev[idx[i]];
            }
            double m = 0.0, v = 0.0;
            ops.mean_var(scratch.data(), scratch.size(), &m, &v);
            centers.push_back(c / static_cast<double>(e - a));
            fhat.push_back(m / dt);
            ghat.push_back(std::sqrt(std::max(v, 0.0) / dt));
            weights.push_back(static_cast<double>(e - a));
        }
        fitted = fit_weighted_poly(centers, fhat, weights, order_f, &fit.f_coeffs) &&
                 fit_weighted_poly(centers, ghat, weights, order_g, &fit.g_coeffs);
    }
    if (!fitted) {
        // not enough distinct levels to resolve S-dependence: order-0 estimate
        fit.f_coeffs.assign(order_f + 1, 0.0);
        fit.g_coeffs.assign(order_g + 1, 0.0);
        fit.f_coeffs[0] = mean_ds / dt;
        fit.g_coeffs[0] = std::sqrt(std::max(var_ds, 0.0) / dt);
        fit.order_fallback = (order_f > 0 || order_g > 0) && !fit.deterministic;
        if (fit.order_fallback)
            std::fprintf(stderr, "rops: slice fit fell back to order 0 "
                                 "(%zu distinct prior levels)\n",
                         distinct);
    }
    if (fit.deterministic) fit.g_coeffs[0] = fit.g_floor;

    const int nf = order_f + 1, ng = order_g + 1;
    fit.stage1_loglik = ops.gauss_loglik(s_prev.data(), ds.data(), n, fit.f_coeffs.data(), nf,
                                         fit.g_coeffs.data(), ng, dt, fit.g_floor);
    fit.loglik = fit.stage1_loglik;
    // the order-0 moment estimate is the exact MLE of the order-0 model, so
    // fallback (and degenerate) slices need no refinement
    if (fit.deterministic || !fitted) return fit;

    // ---- stage 2: maximize the exact log-likelihood from the stage-1 start ----
    std::vector<double> x0(nf + ng);
    std::copy(fit.f_coeffs.begin(), fit.f_coeffs.end(), x0.begin());
    std::copy(fit.g_coeffs.begin(), fit.g_coeffs.end(), x0.begin() + nf);

    double s_char = 1.0;
    for (double s : s_prev) s_char = std::max(s_char, std::fabs(s));
    const double base_f = std::max({std::fabs(mean_ds) / dt, sd_ds / dt, 1e-3});
    const double base_g = std::max(sd_ds / std::sqrt(dt), 1e-3);
    std::vector<double> step(nf + ng);
    for (int p = 0; p < nf; ++p)
        step[p] = std::max(0.1 * std::fabs(x0[p]), 0.1 * base_f / std::pow(s_char, p));
    for (int p = 0; p < ng; ++p)
        step[nf + p] = std::max(0.1 * std::fabs(x0[nf + p]), 0.1 * base_g / std::pow(s_char, p));

    auto neg_loglik = [&](const std::vector<double>& x) {
        return -ops.gauss_loglik(s_prev.data(), ds.data(), n, x.data(), nf, x.data() + nf,
                                 ng, dt, fit.g_floor);
    };
    double best = 0.0;
    std::vector<double> xb =
        nelder_mead(neg_loglik, x0, step, 120 * (nf + ng), &best);
    if (-best >= fit.stage1_loglik) { // keep the better of the two stages
        std::copy(xb.begin(), xb.begin() + nf, fit.f_coeffs.begin());
        std::copy(xb.begin() + nf, xb.end(), fit.g_coeffs.begin());
        fit.loglik = -best;
    }
    return fit;
}

double PlanCpd::drift(int node, double S) const {
    const SliceFit& s = slices.at(node - 1);
    return poly_eval(s.f_coeffs.data(), s.f_coeffs.size(), S);
}

double PlanCpd::diffusion(int node, double S) const {
    const SliceFit& s = slices.at(node - 1);
    return std::max(poly_eval(s.g_coeffs.data(), s.g_coeffs.size(), S), s.g_floor);
}

PlanCpd fit_plan_cpd(const PathEnsemble& ens, int order_f, int order_g,
                     const FitOptions& opts) {
    if (ens.plan_dS.rows == 0 || ens.plan_dS.cols < 2)
        throw SimulationError("fit_plan_cpd: empty ensemble");
    const int N = static_cast<int>(ens.plan_dS.cols) - 1;
    const std::size_t rows = ens.plan_dS.rows;

    PlanCpd cpd;
    cpd.order_f = order_f;
    cpd.order_g = order_g;
    cpd.t0 = ens.grid.t0;
    cpd.dt = ens.grid.dt();
    cpd.slices.resize(N);
    cpd.s_ref.resize(N);

    auto fit_node = [&](int n) {
        std::vector<double> ds(rows), sp(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            ds[r] = ens.plan_dS.at(r, n);
            sp[r] = ens.plan_S.at(r, n - 1);
        }
        cpd.slices[n - 1] = fit_slice(ds, sp, order_f, order_g, cpd.dt);
        SRefStats& st = cpd.s_ref[n - 1];
        double m = 0.0, v = 0.0;
        kernels::active_ops().mean_var(sp.data(), rows, &m, &v);
        kernels::active_ops().minmax(sp.data(), rows, &st.min, &st.max);
        st.mean = m;
    };

    const int threads = std::clamp(opts.threads, 1, N);
    if (threads == 1) {
        for (int n = 1; n <= N; ++n) fit_node(n);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (N + threads - 1) / threads;
        for (int w = 0; w < threads; ++w) {
            const int a = 1 + w * chunk;
            const int b = std::min(N + 1, a + chunk);
            if (a >= b) break;
            pool.emplace_back([&, a, b] {
                for (int n = a; n < b; ++n) fit_node(n);
            });
        }
        for (auto& th : pool) th.join();
    }
    return cpd;
}

double eval_cpd(const PlanCpd& cpd, int node, double S, double dS) {
    if (node < 1 || node > cpd.n_nodes())
        throw std::domain_error("eval_cpd: node out of range");
    if (!(cpd.dt > 0.0)) throw std::domain_error("eval_cpd: nonpositive dt");
    const double g = cpd.diffusion(node, S);
    if (!(g > 0.0)) throw std::domain_error("eval_cpd: diffusion not positive");
    const double f = cpd.drift(node, S);
    const double v = g * g * cpd.dt;
    const double r = dS - f * cpd.dt;
    return std::exp(-(r * r) / (2.0 * v)) / std::sqrt(kTwoPi * v);
}

} // namespace rops
