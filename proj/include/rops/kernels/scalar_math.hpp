#pragma once

// Reference scalar implementations of the transcendental cores used by the
// compute kernels. The AVX2 variants in kernels_avx2.cpp mirror these
// operation-for-operation (same reductions, same polynomial evaluation
// order, explicit fma), so scalar and SIMD kernel outputs are bit-identical.
//
// Everything here lives in an anonymous namespace on purpose: each
// translation unit gets its own internally-linked copy, so a TU compiled
// with -mavx2 can never leak AVX-encoded code into the scalar dispatch path.

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

namespace rops::kernels::detail {
namespace {

// min/max with the exact x86 vminpd/vmaxpd operand semantics (second operand
// wins on unordered/equal), so scalar and AVX2 paths agree bit-for-bit.
[[maybe_unused]] inline double vmin_core(double a, double b) { return a < b ? a : b; }
[[maybe_unused]] inline double vmax_core(double a, double b) { return a > b ? a : b; }

// ---------------------------------------------------------------------------
// exp: Cody-Waite range reduction + Cephes rational approximation.
//
// Domain policy (documented, shared with the SIMD variant):
//   x > 709        -> +inf
//   x < -708.3964  -> 0      (true values there are subnormal or zero)
//   NaN            -> NaN
// Accuracy vs std::exp is a couple of ulp; tested in test_kernels.cpp.
// ---------------------------------------------------------------------------

constexpr double kExpHi = 709.0;
constexpr double kExpLo = -708.396418532264106224;
constexpr double kLog2E = 1.44269504088896340736;
constexpr double kLn2Hi = 6.93145751953125e-1;
constexpr double kLn2Lo = 1.42860682030941723212e-6;

constexpr double kExpP0 = 1.26177193074810590878e-4;
constexpr double kExpP1 = 3.02994407707441961300e-2;
constexpr double kExpP2 = 9.99999999999999999910e-1;
constexpr double kExpQ0 = 3.00198505138664455042e-6;
constexpr double kExpQ1 = 2.52448340349684104192e-3;
constexpr double kExpQ2 = 2.27265548208155028766e-1;
constexpr double kExpQ3 = 2.00000000000000000005e0;

[[maybe_unused]] inline double exp_core(double x) {
    if (std::isnan(x)) return x;
    if (x > kExpHi) return std::numeric_limits<double>::infinity();
    if (x < kExpLo) return 0.0;

    const double k = std::nearbyint(x * kLog2E);
    double r = std::fma(-k, kLn2Hi, x);
    r = std::fma(-k, kLn2Lo, r);

    const double z = r * r;
    const double p = r * std::fma(std::fma(kExpP0, z, kExpP1), z, kExpP2);
    const double q = std::fma(std::fma(std::fma(kExpQ0, z, kExpQ1), z, kExpQ2), z, kExpQ3);
    const double e = std::fma(2.0, p / (q - p), 1.0);

    // scale by 2^k through the exponent field; k is in [-1022, 1023] here
    const auto ki = static_cast<std::int64_t>(k);
    const double scale = std::bit_cast<double>(static_cast<std::uint64_t>(ki + 1023) << 52);
    return e * scale;
}

// ---------------------------------------------------------------------------
// log: frexp-style normalization + Cephes rational approximation.
//   x < 0 -> NaN, x == 0 -> -inf, +inf -> +inf, NaN -> NaN.
// Subnormal inputs are rescaled by 2^54 before exponent extraction.
// ---------------------------------------------------------------------------

constexpr double kSqrtHalf = 0.70710678118654752440;
constexpr double kLogP0 = 1.01875663804580931796e-4;
constexpr double kLogP1 = 4.97494994976747001425e-1;
constexpr double kLogP2 = 4.70579119878881725854e0;
constexpr double kLogP3 = 1.44989225341610930846e1;
constexpr double kLogP4 = 1.79368678507819816313e1;
constexpr double kLogP5 = 7.70838733755885391666e0;
constexpr double kLogQ0 = 1.12873587189167450590e1;
constexpr double kLogQ1 = 4.52279145837532221105e1;
constexpr double kLogQ2 = 8.29875266912776603211e1;
constexpr double kLogQ3 = 7.11544750618563894466e1;
constexpr double kLogQ4 = 2.31251620126765340583e1;
constexpr double kLn2HiLog = 0.693359375;
constexpr double kLn2LoLog = -2.121944400546905827679e-4;

[[maybe_unused]] inline double log_core(double x) {
    if (std::isnan(x)) return x;
    if (x < 0.0) return std::numeric_limits<double>::quiet_NaN();
    if (x == 0.0) return -std::numeric_limits<double>::infinity();
    if (std::isinf(x)) return x;

    int e_adj = 0;
    if (x < std::numeric_limits<double>::min()) {
        x *= 0x1p54;
        e_adj = -54;
    }
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    int e = static_cast<int>((bits >> 52) & 0x7FF) - 1022 + e_adj;
    double m = std::bit_cast<double>((bits & 0x000FFFFFFFFFFFFFull) | 0x3FE0000000000000ull);
    if (m < kSqrtHalf) {
        m += m;
        e -= 1;
    }

    const double z = m - 1.0;
    const double w = z * z;
    double pp = std::fma(kLogP0, z, kLogP1);
    pp = std::fma(pp, z, kLogP2);
    pp = std::fma(pp, z, kLogP3);
    pp = std::fma(pp, z, kLogP4);
    pp = std::fma(pp, z, kLogP5);
    double qq = z + kLogQ0;
    qq = std::fma(qq, z, kLogQ1);
    qq = std::fma(qq, z, kLogQ2);
    qq = std::fma(qq, z, kLogQ3);
    qq = std::fma(qq, z, kLogQ4);

    const double ed = static_cast<double>(e);
    double r = (z * w) * (pp / qq);
    r = std::fma(-0.5, w, r);
    r = std::fma(ed, kLn2LoLog, r);
    r = r + z;
    r = std::fma(ed, kLn2HiLog, r);
    return r;
}

// ---------------------------------------------------------------------------
// Finite-range sampling maps. u in [0,1] -> y in [-1,1] with temperature q:
//   y = sgn(2u-1) * q * ((1 + 1/q)^{|2u-1|} - 1)
// The |2u-1| >= 1 boundary is pinned to +/-1 exactly so affine rescaling of a
// side hits its bound exactly.
// ---------------------------------------------------------------------------

[[maybe_unused]] inline double asa_inverse_core(double u, double q, double log1p_inv_q) {
    const double t = std::fma(2.0, u, -1.0);
    const double a = std::fabs(t);
    double y;
    if (a >= 1.0) {
        y = 1.0;
    } else {
        y = q * (exp_core(a * log1p_inv_q) - 1.0);
    }
    return t < 0.0 ? -y : y;
}

struct TwoSidedCoreParams {
    double mean;
    double lower;
    double upper;
    double q_low;
    double q_high;
    double p_low;
    double log1p_low;  // log(1 + 1/q_low)
    double log1p_high; // log(1 + 1/q_high)
};

[[maybe_unused]] inline double two_sided_core(double u_side, double u_mag,
                                              const TwoSidedCoreParams& p) {
    const bool low = u_side < p.p_low;
    const double q = low ? p.q_low : p.q_high;
    const double l = low ? p.log1p_low : p.log1p_high;
    const double t = std::fma(2.0, u_mag, -1.0);
    const double a = std::fabs(t);
    if (a >= 1.0) return low ? p.lower : p.upper;
    const double mag = q * (exp_core(a * l) - 1.0);
    double v = low ? std::fma(-mag, p.mean - p.lower, p.mean)
                   : std::fma(mag, p.upper - p.mean, p.mean);
    v = vmin_core(vmax_core(v, p.lower), p.upper);
    return v;
}

// Horner evaluation shared by the likelihood kernels; nc >= 1 coefficients,
// lowest order first.
[[maybe_unused]] inline double poly_core(const double* c, int nc, double s) {
    double acc = c[nc - 1];
    for (int k = nc - 2; k >= 0; --k) acc = std::fma(acc, s, c[k]);
    return acc;
}

constexpr double kTwoPi = 6.28318530717958647692;

// Per-sample Gaussian transition log-density with polynomial drift f(s) and
// diffusion g(s); matches the SIMD lane body exactly.
[[maybe_unused]] inline double gauss_loglik_core(double ds, double s, const double* fc, int nf,
                                                 const double* gc, int ng, double dt,
                                                 double g_floor) {
    const double f = poly_core(fc, nf, s);
    double g = poly_core(gc, ng, s);
    g = vmax_core(g, g_floor);
    const double r = std::fma(-f, dt, ds);
    const double den = (g * g) * dt;
    const double quad = (r * r) / (den + den);
    return std::fma(-0.5, log_core(kTwoPi * den), -quad);
}

} // namespace
} // namespace rops::kernels::detail
