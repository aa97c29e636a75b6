#pragma once

// Compute kernels behind the simulator, the fitter and the tree pricer.
// Two variants exist: a scalar reference and an AVX2+FMA one. Both follow
// the same numeric contract -- identical polynomial cores, explicit fma,
// 4-lane strided accumulation with a fixed combine order -- so their
// results are bit-identical, which test_kernels.cpp asserts.
//
// Variant selection happens once at startup: AVX2 when the CPU supports
// avx2+fma, overridable with ROPS_SIMD=scalar|avx2.

#include <cstddef>
#include <cstdint>

namespace rops::kernels {

struct TwoSidedParams {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double q_low = 0.1;
    double q_high = 0.1;
    double p_low = 0.5;
    double log1p_low = 0.0;  // log(1 + 1/q_low), precomputed by the caller
    double log1p_high = 0.0; // log(1 + 1/q_high)
};

struct Ops {
    const char* name;

    double (*sum)(const double* x, std::size_t n);
    // population mean and variance in one pass; n == 0 gives {0, 0}
    void (*mean_var)(const double* x, std::size_t n, double* mean, double* var);
    void (*minmax)(const double* x, std::size_t n, double* mn, double* mx);
    void (*add)(const double* x, double* y, std::size_t n);          // y += x
    void (*scale_add)(double a, const double* x, double* y, std::size_t n); // y += a*x
    void (*exp_v)(const double* x, double* y, std::size_t n);
    void (*log_v)(const double* x, double* y, std::size_t n);

    // u in [0,1] -> y in [-1,1], the annealing generating law at temperature q
    void (*asa_map)(const double* u, double* y, std::size_t n, double q,
                    double log1p_inv_q);

    // (u_side, u_mag) uniform pairs -> bounded asymmetric draws
    void (*two_sided_map)(const double* u_side, const double* u_mag, double* out,
                          std::size_t n, const TwoSidedParams& p);

    // sum over samples of the Gaussian transition log-density
    //   ds_i ~ N(f(s_i) dt, g(s_i)^2 dt),  f,g polynomials (lowest order first)
    double (*gauss_loglik)(const double* s, const double* ds, std::size_t n,
                           const double* fc, int nf, const double* gc, int ng,
                           double dt, double g_floor);

    // one backward-induction sweep over a tree level:
    //   out[i] = disc * (pu[i]*next[up[i]] + (1-pu[i])*next[dn[i]])
    void (*backward_step)(const double* next, const double* pu,
                          const std::int32_t* up, const std::int32_t* dn,
                          double disc, double* out, std::size_t n);
};

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif

// The variant picked at process start (CPU detection + ROPS_SIMD override).
const Ops& active_ops();

} // namespace rops::kernels
