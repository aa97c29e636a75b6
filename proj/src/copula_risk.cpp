#include "rops/copula_risk.hpp"

#include "rops/errors.hpp"
#include "rops/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rops {

namespace {

// Cyclic Jacobi diagonalization of a symmetric matrix. a (row-major, p x p)
// ends up diagonal with the eigenvalues on it; v's columns hold the
// eigenvectors. Quadratic convergence makes 60 sweeps far more than any
// correlation-sized input needs.
void jacobi_symmetric(std::vector<double>& a, std::vector<double>& v, int p) {
    std::fill(v.begin(), v.end(), 0.0);
    for (int i = 0; i < p; ++i) v[i * p + i] = 1.0;
    double diag2 = 1.0;
    for (int i = 0; i < p; ++i) diag2 += a[i * p + i] * a[i * p + i];
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off2 = 0.0;
        for (int i = 0; i < p; ++i)
            for (int j = i + 1; j < p; ++j) off2 += a[i * p + j] * a[i * p + j];
        if (off2 <= 1e-28 * diag2) return;
        for (int i = 0; i < p - 1; ++i) {
            for (int j = i + 1; j < p; ++j) {
                const double apq = a[i * p + j];
                if (apq == 0.0) continue;
                const double tau = (a[j * p + j] - a[i * p + i]) / (2.0 * apq);
                const double t =
                    (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < p; ++k) {
                    const double aik = a[i * p + k];
                    const double ajk = a[j * p + k];
                    a[i * p + k] = c * aik - s * ajk;
                    a[j * p + k] = s * aik + c * ajk;
                }
                for (int k = 0; k < p; ++k) {
                    const double aki = a[k * p + i];
                    const double akj = a[k * p + j];
                    a[k * p + i] = c * aki - s * akj;
                    a[k * p + j] = s * aki + c * akj;
                    const double vki = v[k * p + i];
                    const double vkj = v[k * p + j];
                    v[k * p + i] = c * vki - s * vkj;
                    v[k * p + j] = s * vki + c * vkj;
                }
            }
        }
    }
}

double horner(const double* c, int n, double x) {
    double acc = c[n - 1];
    for (int i = n - 2; i >= 0; --i) acc = acc * x + c[i];
    return acc;
}

} // namespace

std::vector<double> rank_to_uniform(const std::vector<double>& samples) {
    const std::size_t n = samples.size();
    if (n < 20)
        throw SimulationError("rank_to_uniform: degenerate marginal, " + std::to_string(n) +
                              " samples (needs >= 20)");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(samples[i]))
            throw SimulationError("rank_to_uniform: non-finite sample at index " +
                                  std::to_string(i));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return samples[a] < samples[b]; });

    std::vector<double> u(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && samples[idx[j + 1]] == samples[idx[i]]) ++j;
        // ranks are 1-based; a tie block i..j shares the average rank
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        const double ui = avg / static_cast<double>(n + 1);
        for (std::size_t k = i; k <= j; ++k) u[idx[k]] = ui;
        i = j + 1;
    }
    return u;
}

// Wichura's PPND16 (algorithm AS 241): three rational approximations, one for
// the central range and two for the tails, good to ~1e-15 absolute.
double normal_quantile(double u) {
    if (!(u > 0.0 && u < 1.0))
        throw std::domain_error("normal_quantile: u must lie in (0, 1), got " +
                                std::to_string(u));

    static constexpr double kA[8] = {3.3871328727963666080e0,  1.3314166789178437745e2,
                                     1.9715909503065514427e3,  1.3731693765509461125e4,
                                     4.5921953931549871457e4,  6.7265770927008700853e4,
                                     3.3430575583588128105e4,  2.5090809287301226727e3};
    static constexpr double kB[8] = {1.0,                      4.2313330701600911252e1,
                                     6.8718700749205790830e2,  5.3941960214247511077e3,
                                     2.1213794301586595867e4,  3.9307895800092710610e4,
                                     2.8729085735721942674e4,  5.2264952788528545610e3};
    static constexpr double kC[8] = {1.42343711074968357734e0, 4.63033784615654529590e0,
                                     5.76949722146069140550e0, 3.64784832476320460504e0,
                                     1.27045825245236838258e0, 2.41780725177450611770e-1,
                                     2.27238449892691845833e-2, 7.74545014278341407640e-4};
    static constexpr double kD[8] = {1.0,                      2.05319162663775882187e0,
                                     1.67638483018380384940e0, 6.89767334985100004550e-1,
                                     1.48103976427480074590e-1, 1.51986665636164571966e-2,
                                     5.47593808499534494600e-4, 1.05075007164441684324e-9};
    static constexpr double kE[8] = {6.65790464350110377720e0, 5.46378491116411436990e0,
                                     1.78482653991729133580e0, 2.96560571828504891230e-1,
                                     2.65321895265761230930e-2, 1.24266094738807843860e-3,
                                     2.71155556874348757815e-5, 2.01033439929228813265e-7};
    static constexpr double kF[8] = {1.0,                      5.99832206555887937690e-1,
                                     1.36929880922735805310e-1, 1.48753612908506148525e-2,
                                     7.86869131145613259100e-4, 1.84631831751005468180e-5,
                                     1.42151175831644588870e-7, 2.04426310338993978564e-15};

    const double q = u - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q * horner(kA, 8, r) / horner(kB, 8, r);
    }
    double r = q < 0.0 ? u : 1.0 - u;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = horner(kC, 8, r) / horner(kD, 8, r);
    } else {
        r -= 5.0;
        val = horner(kE, 8, r) / horner(kF, 8, r);
    }
    return q < 0.0 ? -val : val;
}

std::vector<double> gaussian_scores(const std::vector<double>& uniforms) {
    std::vector<double> z;
    z.reserve(uniforms.size());
    for (double u : uniforms) z.push_back(normal_quantile(u));
    return z;
}

Matrix psd_repair(const Matrix& m) {
    if (m.rows != m.cols) throw std::invalid_argument("psd_repair: matrix must be square");
    const int p = static_cast<int>(m.rows);
    if (p == 0) return m;
    double scale = 0.0;
    for (double d : m.data) scale = std::max(scale, std::fabs(d));
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j)
            if (std::fabs(m.at(i, j) - m.at(j, i)) > 1e-12 * (1.0 + scale))
                throw std::invalid_argument("psd_repair: matrix is not symmetric");

    std::vector<double> a(m.data);
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j)
            a[i * p + j] = a[j * p + i] = 0.5 * (m.at(i, j) + m.at(j, i));
    std::vector<double> v(static_cast<std::size_t>(p) * p);
    jacobi_symmetric(a, v, p);

    double min_eig = a[0];
    for (int i = 1; i < p; ++i) min_eig = std::min(min_eig, a[i * p + i]);
    if (min_eig >= -1e-12) return m;

    std::vector<double> lam(p);
    for (int i = 0; i < p; ++i) lam[i] = std::max(a[i * p + i], 0.0);
    Matrix out(m.rows, m.cols);
    for (int i = 0; i < p; ++i) {
        for (int j = i; j < p; ++j) {
            double acc = 0.0;
            for (int k = 0; k < p; ++k) acc += lam[k] * v[i * p + k] * v[j * p + k];
            out.at(i, j) = out.at(j, i) = acc;
        }
    }
    // scale the diagonal back to 1; clipping only ever raises it, so a zero
    // diagonal means the row lived entirely in removed directions
    std::vector<double> d(p);
    for (int i = 0; i < p; ++i) d[i] = out.at(i, i) > 0.0 ? std::sqrt(out.at(i, i)) : 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            out.at(i, j) = d[i] > 0.0 && d[j] > 0.0 ? out.at(i, j) / (d[i] * d[j]) : 0.0;
    for (int i = 0; i < p; ++i) out.at(i, i) = 1.0;
    return out;
}

RiskReport project_risk(const PathEnsemble& ens, const RiskOptions& opts) {
    const std::size_t n_proj = ens.project_ids.size();
    if (ens.project_dS.size() != n_proj)
        throw SimulationError("project_risk: ensemble carries " +
                              std::to_string(ens.project_dS.size()) + " project matrices for " +
                              std::to_string(n_proj) + " project ids");
    if (n_proj < 2)
        throw PlanError("project_risk: needs >= 2 projects, ensemble has " +
                        std::to_string(n_proj));

    const std::size_t n_rows = ens.project_dS[0].rows;
    const int n_nodes = ens.grid.n_nodes;
    for (const Matrix& dS : ens.project_dS)
        if (dS.rows != n_rows || dS.cols != static_cast<std::size_t>(n_nodes) + 1)
            throw SimulationError("project_risk: project increment matrices disagree in shape");
    if (ens.replicate_ids.size() != n_rows)
        throw SimulationError("project_risk: replicate id list does not match row count");
    if (n_rows < 100)
        throw PlanError("project_risk: needs >= 100 replicates, ensemble has " +
                        std::to_string(n_rows));

    const int lo = opts.window_lo;
    const int hi = opts.window_hi == 0 ? n_nodes : opts.window_hi;
    if (lo < 1 || hi < lo || hi > n_nodes)
        throw PlanError("project_risk: window [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "] must satisfy 1 <= lo <= hi <= " +
                        std::to_string(n_nodes));
    for (double q : opts.quantiles)
        if (!(q > 0.0 && q < 1.0))
            throw PlanError("project_risk: quantile levels must lie in (0, 1), got " +
                            std::to_string(q));

    // windowed statistic per project and replicate; relative mode poisons a
    // replicate as soon as any project's prior level fails to be positive
    std::vector<std::vector<double>> stat(n_proj, std::vector<double>(n_rows, 0.0));
    std::vector<char> valid(n_rows, 1);
    for (std::size_t p = 0; p < n_proj; ++p) {
        const Matrix& dS = ens.project_dS[p];
        for (std::size_t r = 0; r < n_rows; ++r) {
            const double* row = dS.row(r);
            if (!opts.relative) {
                double acc = 0.0;
                for (int node = lo; node <= hi; ++node) acc += row[node];
                stat[p][r] = acc;
            } else {
                double s_prev = 0.0;
                for (int node = 1; node < lo; ++node) s_prev += row[node];
                double acc = 0.0;
                for (int node = lo; node <= hi; ++node) {
                    if (s_prev <= 0.0) {
                        valid[r] = 0;
                        break;
                    }
                    acc += row[node] / s_prev;
                    s_prev += row[node];
                }
                stat[p][r] = acc;
            }
        }
    }

    std::vector<std::size_t> rows;
    rows.reserve(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r)
        if (valid[r]) rows.push_back(r);
    const std::size_t n = rows.size();
    const std::uint64_t dropped = n_rows - n;

    RiskReport rep;
    rep.window_lo = lo;
    rep.window_hi = hi;
    rep.relative = opts.relative;
    rep.scores.exclusions = dropped;
    if (dropped > 0) {
        if (n == 0)
            throw PlanError("project_risk: relative mode dropped every replicate (prior "
                            "project level <= 0 inside the window; levels start at 0, so "
                            "open the window after first spend)");
        if (n < 100)
            throw PlanError("project_risk: relative mode kept only " + std::to_string(n) +
                            " of " + std::to_string(n_rows) + " replicates (needs >= 100)");
        rep.warnings.push_back("relative mode dropped " + std::to_string(dropped) +
                               " replicate(s) with non-positive prior project level");
    }

    // compact the kept rows and drop projects whose statistic never varies
    const auto& ops = kernels::active_ops();
    std::vector<std::vector<double>> vals;
    vals.reserve(n_proj);
    std::vector<std::size_t> keep;
    for (std::size_t p = 0; p < n_proj; ++p) {
        std::vector<double> col(n);
        for (std::size_t r = 0; r < n; ++r) col[r] = stat[p][rows[r]];
        double mn = 0.0, mx = 0.0;
        ops.minmax(col.data(), n, &mn, &mx);
        if (mn == mx) {
            rep.excluded.push_back(ens.project_ids[p]);
            rep.warnings.push_back("project '" + ens.project_ids[p] +
                                   "': zero variance over window [" + std::to_string(lo) +
                                   ", " + std::to_string(hi) + "]; excluded");
            continue;
        }
        keep.push_back(p);
        rep.project_ids.push_back(ens.project_ids[p]);
        vals.push_back(std::move(col));
    }
    const std::size_t n_kept = keep.size();
    if (n_kept < 2)
        throw PlanError("project_risk: after zero-variance exclusions only " +
                        std::to_string(n_kept) + " project(s) remain (needs >= 2)");

    // empirical CDF -> uniforms -> standard normal scores, per column
    std::vector<std::vector<double>> zc(n_kept);
    for (std::size_t j = 0; j < n_kept; ++j) zc[j] = gaussian_scores(rank_to_uniform(vals[j]));
    rep.scores.z = Matrix(n, n_kept);
    for (std::size_t j = 0; j < n_kept; ++j)
        for (std::size_t r = 0; r < n; ++r) rep.scores.z.at(r, j) = zc[j][r];

    // Gaussian-space covariance and correlation. Identical input columns give
    // bitwise identical centered columns, so their correlation lands on 1.0
    // exactly (c / sqrt(c * c) == 1 in round-to-nearest).
    for (std::size_t j = 0; j < n_kept; ++j) {
        double mean = 0.0, var = 0.0;
        ops.mean_var(zc[j].data(), n, &mean, &var);
        for (std::size_t r = 0; r < n; ++r) zc[j][r] -= mean;
    }
    rep.covariance = Matrix(n_kept, n_kept);
    for (std::size_t i = 0; i < n_kept; ++i) {
        for (std::size_t j = i; j < n_kept; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < n; ++r) acc += zc[i][r] * zc[j][r];
            acc /= static_cast<double>(n - 1);
            rep.covariance.at(i, j) = rep.covariance.at(j, i) = acc;
        }
    }
    rep.correlation = Matrix(n_kept, n_kept);
    for (std::size_t i = 0; i < n_kept; ++i)
        for (std::size_t j = i; j < n_kept; ++j)
            rep.correlation.at(i, j) = rep.correlation.at(j, i) =
                rep.covariance.at(i, j) /
                std::sqrt(rep.covariance.at(i, i) * rep.covariance.at(j, j));
    rep.correlation = psd_repair(rep.correlation);

    // tails: order each column ascending by (value, row) once; the tail set
    // for level q is the suffix of n - floor(q n) rows, ties resolved toward
    // the higher row, so its smallest member is the reported quantile
    std::vector<std::vector<std::size_t>> order(n_kept);
    for (std::size_t j = 0; j < n_kept; ++j) {
        order[j].resize(n);
        std::iota(order[j].begin(), order[j].end(), std::size_t{0});
        const std::vector<double>& v = vals[j];
        std::sort(order[j].begin(), order[j].end(), [&](std::size_t a, std::size_t b) {
            if (v[a] != v[b]) return v[a] < v[b];
            return a < b;
        });
    }

    const std::size_t n_q = opts.quantiles.size();
    rep.tail_table.resize(n_kept * n_q);
    std::vector<std::vector<char>> in_tail(n_kept, std::vector<char>(n, 0));
    for (std::size_t qi = 0; qi < n_q; ++qi) {
        const double q = opts.quantiles[qi];
        const std::size_t below = static_cast<std::size_t>(std::floor(q * static_cast<double>(n)));
        const std::size_t m = n - below; // >= 1 for q < 1
        for (std::size_t j = 0; j < n_kept; ++j) {
            std::fill(in_tail[j].begin(), in_tail[j].end(), 0);
            for (std::size_t k = below; k < n; ++k) in_tail[j][order[j][k]] = 1;
        }
        for (std::size_t j = 0; j < n_kept; ++j) {
            TailEntry& e = rep.tail_table[j * n_q + qi];
            e.project_id = rep.project_ids[j];
            e.quantile = q;
            e.threshold = vals[j][order[j][below]];
            e.co_exceedance.resize(n_kept);
            for (std::size_t o = 0; o < n_kept; ++o) {
                std::size_t joint = 0;
                for (std::size_t r = 0; r < n; ++r)
                    joint += static_cast<std::size_t>(in_tail[j][r] & in_tail[o][r]);
                e.co_exceedance[o] = static_cast<double>(joint) / static_cast<double>(m);
            }
            std::vector<std::size_t> tail_rows(order[j].begin() + static_cast<std::ptrdiff_t>(below),
                                               order[j].end());
            std::sort(tail_rows.begin(), tail_rows.end());
            e.replicates.reserve(m);
            e.values.reserve(m);
            for (std::size_t r : tail_rows) {
                e.replicates.push_back(ens.replicate_ids[rows[r]]);
                e.values.push_back(vals[j][r]);
            }
        }
    }
    return rep;
}

} // namespace rops
