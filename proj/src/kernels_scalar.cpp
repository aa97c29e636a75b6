// Scalar reference kernels. The loop shapes deliberately mirror the AVX2
// variant: reductions run four strided accumulators over the 4-aligned body,
// combine them as (a0+a2)+(a1+a3), then fold the tail sequentially. Keeping
// that structure identical on both sides is what buys bitwise equality.

#include "rops/kernels/kernels.hpp"
#include "rops/kernels/scalar_math.hpp"

#include <cmath>
#include <limits>

namespace rops::kernels {
namespace {

using detail::vmax_core;
using detail::vmin_core;

double sum_impl(const double* x, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        a0 += x[i];
        a1 += x[i + 1];
        a2 += x[i + 2];
        a3 += x[i + 3];
    }
    double s = (a0 + a2) + (a1 + a3);
    for (std::size_t i = n4; i < n; ++i) s += x[i];
    return s;
}

void mean_var_impl(const double* x, std::size_t n, double* mean, double* var) {
    if (n == 0) {
        *mean = 0.0;
        *var = 0.0;
        return;
    }
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    double q0 = 0.0, q1 = 0.0, q2 = 0.0, q3 = 0.0;
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        s0 += x[i];
        s1 += x[i + 1];
        s2 += x[i + 2];
        s3 += x[i + 3];
        q0 = std::fma(x[i], x[i], q0);
        q1 = std::fma(x[i + 1], x[i + 1], q1);
        q2 = std::fma(x[i + 2], x[i + 2], q2);
        q3 = std::fma(x[i + 3], x[i + 3], q3);
    }
    double s = (s0 + s2) + (s1 + s3);
    double q = (q0 + q2) + (q1 + q3);
    for (std::size_t i = n4; i < n; ++i) {
        s += x[i];
        q = std::fma(x[i], x[i], q);
    }
    const double m = s / static_cast<double>(n);
    double v = q / static_cast<double>(n) - m * m;
    if (v < 0.0) v = 0.0;
    *mean = m;
    *var = v;
}

void minmax_impl(const double* x, std::size_t n, double* mn, double* mx) {
    const double inf = std::numeric_limits<double>::infinity();
    double lo0 = inf, lo1 = inf, lo2 = inf, lo3 = inf;
    double hi0 = -inf, hi1 = -inf, hi2 = -inf, hi3 = -inf;
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        lo0 = vmin_core(lo0, x[i]);
        lo1 = vmin_core(lo1, x[i + 1]);
        lo2 = vmin_core(lo2, x[i + 2]);
        lo3 = vmin_core(lo3, x[i + 3]);
        hi0 = vmax_core(hi0, x[i]);
        hi1 = vmax_core(hi1, x[i + 1]);
        hi2 = vmax_core(hi2, x[i + 2]);
        hi3 = vmax_core(hi3, x[i + 3]);
    }
    double lo = vmin_core(vmin_core(lo0, lo2), vmin_core(lo1, lo3));
    double hi = vmax_core(vmax_core(hi0, hi2), vmax_core(hi1, hi3));
    for (std::size_t i = n4; i < n; ++i) {
        lo = vmin_core(lo, x[i]);
        hi = vmax_core(hi, x[i]);
    }
    *mn = lo;
    *mx = hi;
}

void add_impl(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void scale_add_impl(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void exp_v_impl(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = detail::exp_core(x[i]);
}

void log_v_impl(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = detail::log_core(x[i]);
}

void asa_map_impl(const double* u, double* y, std::size_t n, double q,
                  double log1p_inv_q) {
    for (std::size_t i = 0; i < n; ++i)
        y[i] = detail::asa_inverse_core(u[i], q, log1p_inv_q);
}

void two_sided_map_impl(const double* u_side, const double* u_mag, double* out,
                        std::size_t n, const TwoSidedParams& p) {
    const detail::TwoSidedCoreParams cp{p.mean,  p.lower,     p.upper,
                                        p.q_low, p.q_high,    p.p_low,
                                        p.log1p_low, p.log1p_high};
    for (std::size_t i = 0; i < n; ++i)
        out[i] = detail::two_sided_core(u_side[i], u_mag[i], cp);
}

double gauss_loglik_impl(const double* s, const double* ds, std::size_t n,
                         const double* fc, int nf, const double* gc, int ng,
                         double dt, double g_floor) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        a0 += detail::gauss_loglik_core(ds[i], s[i], fc, nf, gc, ng, dt, g_floor);
        a1 += detail::gauss_loglik_core(ds[i + 1], s[i + 1], fc, nf, gc, ng, dt, g_floor);
        a2 += detail::gauss_loglik_core(ds[i + 2], s[i + 2], fc, nf, gc, ng, dt, g_floor);
        a3 += detail::gauss_loglik_core(ds[i + 3], s[i + 3], fc, nf, gc, ng, dt, g_floor);
    }
    double acc = (a0 + a2) + (a1 + a3);
    for (std::size_t i = n4; i < n; ++i)
        acc += detail::gauss_loglik_core(ds[i], s[i], fc, nf, gc, ng, dt, g_floor);
    return acc;
}

void backward_step_impl(const double* next, const double* pu,
                        const std::int32_t* up, const std::int32_t* dn,
                        double disc, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double pd = 1.0 - pu[i];
        const double t = pd * next[dn[i]];
        out[i] = disc * std::fma(pu[i], next[up[i]], t);
    }
}

} // namespace

const Ops& scalar_ops() {
    static const Ops ops{
        "scalar",        sum_impl,       mean_var_impl, minmax_impl,
        add_impl,        scale_add_impl, exp_v_impl,    log_v_impl,
        asa_map_impl,    two_sided_map_impl, gauss_loglik_impl, backward_step_impl,
    };
    return ops;
}

} // namespace rops::kernels
