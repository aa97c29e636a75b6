#pragma once

// Sampling primitives: the finite-range annealing density on [-1,1] with
// temperature q, the asymmetric two-sided law built from it (binary side
// choice + per-side temperature + per-side affine range scaling), and
// truncated-Weibull durations. All randomness enters as explicit uniforms,
// so everything here is a pure function.

#include "rops/rng.hpp"

#include <string>

namespace rops {

struct TwoSidedSpec {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double q_low = 0.1;
    double q_high = 0.1;
    double p_low = 0.5;
};

struct WeibullSpec {
    double shape = 1.0;
    double scale = 1.0;
    double lower = 0.0;
    double upper = 0.0;
};

struct DurationSpec {
    enum class Kind { two_sided, weibull };
    Kind kind = Kind::two_sided;
    TwoSidedSpec two_sided;
    WeibullSpec weibull;
};

// empty string when valid, else a description of the problem
std::string check_two_sided(const TwoSidedSpec& s);
std::string check_duration(const DurationSpec& s);

// density 1/(2(|y|+q) ln(1+1/q)) on [-1,1]; integrates to 1
double asa_density(double y, double q);

// inverse-CDF map: y = sgn(u-1/2) * q * ((1+1/q)^{|2u-1|} - 1)
double asa_inverse(double u, double q);

// analytic CDF of asa_density, for distribution tests
double asa_cdf(double y, double q);

double two_sided_sample(const TwoSidedSpec& spec, double u_side, double u_mag);

// closed-form moments of the two-sided law (law-of-total-variance checks,
// inner-shell expectations)
double two_sided_mean(const TwoSidedSpec& spec);
double two_sided_var(const TwoSidedSpec& spec);

// analytic CDF of the two-sided law (convolution oracles in tests)
double two_sided_cdf(const TwoSidedSpec& spec, double v);

// inverse-CDF draw of Weibull(shape, scale) conditioned on [lower, upper];
// u=0 and u=1 land exactly on the truncation bounds
double weibull_trunc_sample(const WeibullSpec& spec, double u);

// draws from the task's stream; two_sided consumes (u_side, u_mag) in that
// order, weibull consumes one uniform
double duration_sample(const DurationSpec& spec, Rng& rng);

} // namespace rops
