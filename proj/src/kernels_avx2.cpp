// AVX2+FMA kernels. Compiled with -mavx2 -mfma (see src/CMakeLists.txt);
// nothing in here is referenced unless the dispatcher picked this variant,
// and every helper the scalar path shares lives in an anonymous namespace,
// so no AVX-encoded code can bleed into the scalar binary paths.
//
// Each lane performs exactly the operations of the scalar reference in
// scalar_math.hpp: same range reductions, same polynomial order, fma where
// the scalar writes std::fma, vminpd/vmaxpd semantics mirrored. Reductions
// keep four strided accumulators and combine (a0+a2)+(a1+a3), then reuse the
// scalar cores for the tail. That makes both variants bit-identical.

#if defined(__x86_64__) || defined(_M_X64)

#include "rops/kernels/kernels.hpp"
#include "rops/kernels/scalar_math.hpp"

#include <immintrin.h>

#include <cmath>
#include <limits>

namespace rops::kernels {
namespace {

using detail::vmax_core;
using detail::vmin_core;

const __m256d kOne = _mm256_set1_pd(1.0);
const __m256d kTwo = _mm256_set1_pd(2.0);
const __m256d kHalf = _mm256_set1_pd(0.5);
const __m256d kSignMask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x8000000000000000ll));
// 1.5 * 2^52: adding an integral double in [-2^51, 2^51) to this makes the
// integer readable from (and writable to) the low mantissa bits.
const __m256d kMagic = _mm256_set1_pd(6755399441055744.0);
const long long kMagicBits = 0x4338000000000000ll;

inline __m256d abs4(__m256d x) { return _mm256_andnot_pd(kSignMask, x); }
inline __m256d neg4(__m256d x) { return _mm256_xor_pd(x, kSignMask); }

inline __m256d exp4(__m256d x) {
    const __m256d hi = _mm256_set1_pd(detail::kExpHi);
    const __m256d lo = _mm256_set1_pd(detail::kExpLo);
    const __m256d m_hi = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
    const __m256d m_lo = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
    const __m256d m_nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);

    const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
    const __m256d k = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(detail::kLog2E)),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(detail::kLn2Hi), xc);
    r = _mm256_fnmadd_pd(k, _mm256_set1_pd(detail::kLn2Lo), r);

    const __m256d z = _mm256_mul_pd(r, r);
    __m256d p = _mm256_fmadd_pd(_mm256_set1_pd(detail::kExpP0), z,
                                _mm256_set1_pd(detail::kExpP1));
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(detail::kExpP2));
    p = _mm256_mul_pd(r, p);
    __m256d q = _mm256_fmadd_pd(_mm256_set1_pd(detail::kExpQ0), z,
                                _mm256_set1_pd(detail::kExpQ1));
    q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(detail::kExpQ2));
    q = _mm256_fmadd_pd(q, z, _mm256_set1_pd(detail::kExpQ3));
    const __m256d e = _mm256_fmadd_pd(kTwo, _mm256_div_pd(p, _mm256_sub_pd(q, p)), kOne);

    __m256i ik = _mm256_castpd_si256(_mm256_add_pd(k, kMagic));
    ik = _mm256_sub_epi64(ik, _mm256_set1_epi64x(kMagicBits));
    ik = _mm256_add_epi64(ik, _mm256_set1_epi64x(1023));
    const __m256d scale = _mm256_castsi256_pd(_mm256_slli_epi64(ik, 52));

    __m256d out = _mm256_mul_pd(e, scale);
    out = _mm256_blendv_pd(out, _mm256_set1_pd(std::numeric_limits<double>::infinity()), m_hi);
    out = _mm256_blendv_pd(out, _mm256_setzero_pd(), m_lo);
    out = _mm256_blendv_pd(out, x, m_nan);
    return out;
}

inline __m256d log4(__m256d x) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d m_nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
    const __m256d m_neg = _mm256_cmp_pd(x, zero, _CMP_LT_OQ);
    const __m256d m_zero = _mm256_cmp_pd(x, zero, _CMP_EQ_OQ);
    const __m256d inf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
    const __m256d m_inf = _mm256_cmp_pd(x, inf, _CMP_EQ_OQ);

    // pre-scale subnormal positives by 2^54, remember -54 on the exponent
    const __m256d dmin = _mm256_set1_pd(std::numeric_limits<double>::min());
    const __m256d m_sub = _mm256_and_pd(_mm256_cmp_pd(x, dmin, _CMP_LT_OQ),
                                        _mm256_cmp_pd(x, zero, _CMP_GT_OQ));
    __m256d xs = _mm256_blendv_pd(x, _mm256_mul_pd(x, _mm256_set1_pd(0x1p54)), m_sub);
    __m256i e_adj = _mm256_and_si256(_mm256_castpd_si256(m_sub), _mm256_set1_epi64x(-54));

    const __m256i bits = _mm256_castpd_si256(xs);
    __m256i e = _mm256_srli_epi64(bits, 52);
    e = _mm256_and_si256(e, _mm256_set1_epi64x(0x7FF));
    e = _mm256_add_epi64(e, _mm256_set1_epi64x(-1022));
    e = _mm256_add_epi64(e, e_adj);
    __m256d m = _mm256_castsi256_pd(_mm256_or_si256(
        _mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFll)),
        _mm256_set1_epi64x(0x3FE0000000000000ll)));
    const __m256d m_small = _mm256_cmp_pd(m, _mm256_set1_pd(detail::kSqrtHalf), _CMP_LT_OQ);
    m = _mm256_blendv_pd(m, _mm256_add_pd(m, m), m_small);
    e = _mm256_blendv_epi8(e, _mm256_add_epi64(e, _mm256_set1_epi64x(-1)),
                           _mm256_castpd_si256(m_small));

    const __m256d ed = _mm256_sub_pd(
        _mm256_castsi256_pd(_mm256_add_epi64(e, _mm256_set1_epi64x(kMagicBits))), kMagic);

    const __m256d z = _mm256_sub_pd(m, kOne);
    const __m256d w = _mm256_mul_pd(z, z);
    __m256d pp = _mm256_fmadd_pd(_mm256_set1_pd(detail::kLogP0), z,
                                 _mm256_set1_pd(detail::kLogP1));
    pp = _mm256_fmadd_pd(pp, z, _mm256_set1_pd(detail::kLogP2));
    pp = _mm256_fmadd_pd(pp, z, _mm256_set1_pd(detail::kLogP3));
    pp = _mm256_fmadd_pd(pp, z, _mm256_set1_pd(detail::kLogP4));
    pp = _mm256_fmadd_pd(pp, z, _mm256_set1_pd(detail::kLogP5));
    __m256d qq = _mm256_add_pd(z, _mm256_set1_pd(detail::kLogQ0));
    qq = _mm256_fmadd_pd(qq, z, _mm256_set1_pd(detail::kLogQ1));
    qq = _mm256_fmadd_pd(qq, z, _mm256_set1_pd(detail::kLogQ2));
    qq = _mm256_fmadd_pd(qq, z, _mm256_set1_pd(detail::kLogQ3));
    qq = _mm256_fmadd_pd(qq, z, _mm256_set1_pd(detail::kLogQ4));

    __m256d r = _mm256_mul_pd(_mm256_mul_pd(z, w), _mm256_div_pd(pp, qq));
    r = _mm256_fnmadd_pd(kHalf, w, r);
    r = _mm256_fmadd_pd(ed, _mm256_set1_pd(detail::kLn2LoLog), r);
    r = _mm256_add_pd(r, z);
    r = _mm256_fmadd_pd(ed, _mm256_set1_pd(detail::kLn2HiLog), r);

    r = _mm256_blendv_pd(r, neg4(inf), m_zero);
    r = _mm256_blendv_pd(r, _mm256_set1_pd(std::numeric_limits<double>::quiet_NaN()), m_neg);
    r = _mm256_blendv_pd(r, inf, m_inf);
    r = _mm256_blendv_pd(r, x, m_nan);
    return r;
}

inline double combine_sum(__m256d acc) {
    alignas(32) double t[4];
    _mm256_store_pd(t, acc);
    return (t[0] + t[2]) + (t[1] + t[3]);
}

double sum_impl(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4)
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = combine_sum(acc);
    for (std::size_t i = n4; i < n; ++i) s += x[i];
    return s;
}

void mean_var_impl(const double* x, std::size_t n, double* mean, double* var) {
    if (n == 0) {
        *mean = 0.0;
        *var = 0.0;
        return;
    }
    __m256d sa = _mm256_setzero_pd();
    __m256d qa = _mm256_setzero_pd();
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        sa = _mm256_add_pd(sa, v);
        qa = _mm256_fmadd_pd(v, v, qa);
    }
    double s = combine_sum(sa);
    double q = combine_sum(qa);
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
    __m256d lo = _mm256_set1_pd(inf);
    __m256d hi = _mm256_set1_pd(-inf);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        lo = _mm256_min_pd(lo, v);
        hi = _mm256_max_pd(hi, v);
    }
    alignas(32) double tl[4], th[4];
    _mm256_store_pd(tl, lo);
    _mm256_store_pd(th, hi);
    double l = vmin_core(vmin_core(tl[0], tl[2]), vmin_core(tl[1], tl[3]));
    double h = vmax_core(vmax_core(th[0], th[2]), vmax_core(th[1], th[3]));
    for (std::size_t i = n4; i < n; ++i) {
        l = vmin_core(l, x[i]);
        h = vmax_core(h, x[i]);
    }
    *mn = l;
    *mx = h;
}

void add_impl(const double* x, double* y, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    for (std::size_t i = n4; i < n; ++i) y[i] += x[i];
}

void scale_add_impl(double a, const double* x, double* y, std::size_t n) {
    const __m256d a4 = _mm256_set1_pd(a);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a4, _mm256_loadu_pd(x + i),
                                                _mm256_loadu_pd(y + i)));
    for (std::size_t i = n4; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void exp_v_impl(const double* x, double* y, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
    for (std::size_t i = n4; i < n; ++i) y[i] = detail::exp_core(x[i]);
}

void log_v_impl(const double* x, double* y, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4)
        _mm256_storeu_pd(y + i, log4(_mm256_loadu_pd(x + i)));
    for (std::size_t i = n4; i < n; ++i) y[i] = detail::log_core(x[i]);
}

void asa_map_impl(const double* u, double* y, std::size_t n, double q,
                  double log1p_inv_q) {
    const __m256d q4 = _mm256_set1_pd(q);
    const __m256d l4 = _mm256_set1_pd(log1p_inv_q);
    const __m256d neg1 = _mm256_set1_pd(-1.0);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d t = _mm256_fmadd_pd(kTwo, _mm256_loadu_pd(u + i), neg1);
        const __m256d a = abs4(t);
        const __m256d m_big = _mm256_cmp_pd(a, kOne, _CMP_GE_OQ);
        __m256d v = _mm256_mul_pd(q4, _mm256_sub_pd(exp4(_mm256_mul_pd(a, l4)), kOne));
        v = _mm256_blendv_pd(v, kOne, m_big);
        const __m256d m_neg = _mm256_cmp_pd(t, _mm256_setzero_pd(), _CMP_LT_OQ);
        v = _mm256_blendv_pd(v, neg4(v), m_neg);
        _mm256_storeu_pd(y + i, v);
    }
    for (std::size_t i = n4; i < n; ++i)
        y[i] = detail::asa_inverse_core(u[i], q, log1p_inv_q);
}

void two_sided_map_impl(const double* u_side, const double* u_mag, double* out,
                        std::size_t n, const TwoSidedParams& p) {
    const __m256d mean4 = _mm256_set1_pd(p.mean);
    const __m256d lo4 = _mm256_set1_pd(p.lower);
    const __m256d hi4 = _mm256_set1_pd(p.upper);
    const __m256d plow4 = _mm256_set1_pd(p.p_low);
    const __m256d ql4 = _mm256_set1_pd(p.q_low);
    const __m256d qh4 = _mm256_set1_pd(p.q_high);
    const __m256d ll4 = _mm256_set1_pd(p.log1p_low);
    const __m256d lh4 = _mm256_set1_pd(p.log1p_high);
    const __m256d span_lo = _mm256_set1_pd(p.mean - p.lower);
    const __m256d span_hi = _mm256_set1_pd(p.upper - p.mean);
    const __m256d neg1 = _mm256_set1_pd(-1.0);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d m_low = _mm256_cmp_pd(_mm256_loadu_pd(u_side + i), plow4, _CMP_LT_OQ);
        const __m256d q = _mm256_blendv_pd(qh4, ql4, m_low);
        const __m256d l = _mm256_blendv_pd(lh4, ll4, m_low);
        const __m256d bound = _mm256_blendv_pd(hi4, lo4, m_low);
        const __m256d t = _mm256_fmadd_pd(kTwo, _mm256_loadu_pd(u_mag + i), neg1);
        const __m256d a = abs4(t);
        const __m256d m_big = _mm256_cmp_pd(a, kOne, _CMP_GE_OQ);
        const __m256d mag = _mm256_mul_pd(q, _mm256_sub_pd(exp4(_mm256_mul_pd(a, l)), kOne));
        const __m256d v_lo = _mm256_fnmadd_pd(mag, span_lo, mean4);
        const __m256d v_hi = _mm256_fmadd_pd(mag, span_hi, mean4);
        __m256d v = _mm256_blendv_pd(v_hi, v_lo, m_low);
        v = _mm256_min_pd(_mm256_max_pd(v, lo4), hi4);
        v = _mm256_blendv_pd(v, bound, m_big);
        _mm256_storeu_pd(out + i, v);
    }
    const detail::TwoSidedCoreParams cp{p.mean,  p.lower,     p.upper,
                                        p.q_low, p.q_high,    p.p_low,
                                        p.log1p_low, p.log1p_high};
    for (std::size_t i = n4; i < n; ++i)
        out[i] = detail::two_sided_core(u_side[i], u_mag[i], cp);
}

double gauss_loglik_impl(const double* s, const double* ds, std::size_t n,
                         const double* fc, int nf, const double* gc, int ng,
                         double dt, double g_floor) {
    const __m256d dt4 = _mm256_set1_pd(dt);
    const __m256d floor4 = _mm256_set1_pd(g_floor);
    const __m256d twopi4 = _mm256_set1_pd(detail::kTwoPi);
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d s4 = _mm256_loadu_pd(s + i);
        const __m256d d4 = _mm256_loadu_pd(ds + i);
        __m256d f = _mm256_set1_pd(fc[nf - 1]);
        for (int k = nf - 2; k >= 0; --k) f = _mm256_fmadd_pd(f, s4, _mm256_set1_pd(fc[k]));
        __m256d g = _mm256_set1_pd(gc[ng - 1]);
        for (int k = ng - 2; k >= 0; --k) g = _mm256_fmadd_pd(g, s4, _mm256_set1_pd(gc[k]));
        g = _mm256_max_pd(g, floor4);
        const __m256d r = _mm256_fnmadd_pd(f, dt4, d4);
        const __m256d den = _mm256_mul_pd(_mm256_mul_pd(g, g), dt4);
        const __m256d quad = _mm256_div_pd(_mm256_mul_pd(r, r), _mm256_add_pd(den, den));
        const __m256d ll = _mm256_fnmadd_pd(kHalf, log4(_mm256_mul_pd(twopi4, den)), neg4(quad));
        acc = _mm256_add_pd(acc, ll);
    }
    double total = combine_sum(acc);
    for (std::size_t i = n4; i < n; ++i)
        total += detail::gauss_loglik_core(ds[i], s[i], fc, nf, gc, ng, dt, g_floor);
    return total;
}

void backward_step_impl(const double* next, const double* pu,
                        const std::int32_t* up, const std::int32_t* dn,
                        double disc, double* out, std::size_t n) {
    const __m256d disc4 = _mm256_set1_pd(disc);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d p4 = _mm256_loadu_pd(pu + i);
        const __m128i ui = _mm_loadu_si128(reinterpret_cast<const __m128i*>(up + i));
        const __m128i di = _mm_loadu_si128(reinterpret_cast<const __m128i*>(dn + i));
        const __m256d vu = _mm256_i32gather_pd(next, ui, 8);
        const __m256d vd = _mm256_i32gather_pd(next, di, 8);
        const __m256d t = _mm256_mul_pd(_mm256_sub_pd(kOne, p4), vd);
        _mm256_storeu_pd(out + i, _mm256_mul_pd(disc4, _mm256_fmadd_pd(p4, vu, t)));
    }
    for (std::size_t i = n4; i < n; ++i) {
        const double pd = 1.0 - pu[i];
        const double t = pd * next[dn[i]];
        out[i] = disc * std::fma(pu[i], next[up[i]], t);
    }
}

} // namespace

const Ops& avx2_ops() {
    static const Ops ops{
        "avx2",          sum_impl,       mean_var_impl, minmax_impl,
        add_impl,        scale_add_impl, exp_v_impl,    log_v_impl,
        asa_map_impl,    two_sided_map_impl, gauss_loglik_impl, backward_step_impl,
    };
    return ops;
}

} // namespace rops::kernels

#endif // x86_64
