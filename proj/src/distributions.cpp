#include "rops/distributions.hpp"

#include "rops/kernels/scalar_math.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rops {

namespace {

// normalizer of the one-sided magnitude density 1/(y+q) on [0,1]
double side_log_norm(double q) { return std::log1p(1.0 / q); }

// moments of the one-sided magnitude |y| with temperature q
double side_mean(double q) {
    const double L = side_log_norm(q);
    return (1.0 - q * L) / L;
}
double side_second_moment(double q) {
    const double L = side_log_norm(q);
    return (0.5 - q + q * q * L) / L;
}

} // namespace

std::string check_two_sided(const TwoSidedSpec& s) {
    std::ostringstream err;
    if (!(s.q_low > 0.0) || !(s.q_high > 0.0)) err << "temperatures must be positive; ";
    if (s.p_low < 0.0 || s.p_low > 1.0) err << "p_low must be in [0,1]; ";
    if (!(s.lower <= s.mean && s.mean <= s.upper)) err << "need lower <= mean <= upper; ";
    // a collapsed side is only allowed when that side is never drawn
    if (s.lower == s.mean && s.mean == s.upper) {
        // fully degenerate (deterministic) is fine
    } else if (s.lower == s.mean && s.p_low > 0.0) {
        err << "lower == mean requires p_low = 0; ";
    } else if (s.upper == s.mean && s.p_low < 1.0) {
        err << "upper == mean requires p_low = 1; ";
    }
    return err.str();
}

std::string check_duration(const DurationSpec& s) {
    if (s.kind == DurationSpec::Kind::two_sided) {
        std::string e = check_two_sided(s.two_sided);
        if (e.empty() && !(s.two_sided.lower > 0.0)) e = "duration lower bound must be > 0; ";
        return e;
    }
    std::ostringstream err;
    const WeibullSpec& w = s.weibull;
    if (!(w.shape > 0.0) || !(w.scale > 0.0)) err << "weibull shape and scale must be > 0; ";
    if (!(w.lower > 0.0) || !(w.upper >= w.lower)) err << "weibull range needs upper >= lower > 0; ";
    return err.str();
}

double asa_density(double y, double q) {
    if (!(q > 0.0)) throw std::domain_error("asa_density: q must be > 0");
    if (std::fabs(y) > 1.0) throw std::domain_error("asa_density: |y| must be <= 1");
    return 1.0 / (2.0 * (std::fabs(y) + q) * side_log_norm(q));
}

double asa_inverse(double u, double q) {
    if (!(q > 0.0)) throw std::domain_error("asa_inverse: q must be > 0");
    if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("asa_inverse: u must be in [0,1]");
    return kernels::detail::asa_inverse_core(u, q, side_log_norm(q));
}

double asa_cdf(double y, double q) {
    if (!(q > 0.0)) throw std::domain_error("asa_cdf: q must be > 0");
    if (y <= -1.0) return 0.0;
    if (y >= 1.0) return 1.0;
    const double h = std::log1p(std::fabs(y) / q) / side_log_norm(q);
    return y < 0.0 ? 0.5 * (1.0 - h) : 0.5 * (1.0 + h);
}

double two_sided_sample(const TwoSidedSpec& spec, double u_side, double u_mag) {
    std::string e = check_two_sided(spec);
    if (!e.empty()) throw std::domain_error("two_sided_sample: " + e);
    if (!(u_side >= 0.0 && u_side <= 1.0 && u_mag >= 0.0 && u_mag <= 1.0))
        throw std::domain_error("two_sided_sample: uniforms must be in [0,1]");
    const kernels::detail::TwoSidedCoreParams p{
        spec.mean,  spec.lower, spec.upper,
        spec.q_low, spec.q_high, spec.p_low,
        side_log_norm(spec.q_low), side_log_norm(spec.q_high)};
    return kernels::detail::two_sided_core(u_side, u_mag, p);
}

double two_sided_mean(const TwoSidedSpec& spec) {
    const double lo_span = spec.mean - spec.lower;
    const double hi_span = spec.upper - spec.mean;
    double m = spec.mean;
    if (spec.p_low > 0.0) m -= spec.p_low * side_mean(spec.q_low) * lo_span;
    if (spec.p_low < 1.0) m += (1.0 - spec.p_low) * side_mean(spec.q_high) * hi_span;
    return m;
}

double two_sided_var(const TwoSidedSpec& spec) {
    const double lo_span = spec.mean - spec.lower;
    const double hi_span = spec.upper - spec.mean;
    double m2 = 0.0; // E[(V - mean)^2]
    if (spec.p_low > 0.0) m2 += spec.p_low * side_second_moment(spec.q_low) * lo_span * lo_span;
    if (spec.p_low < 1.0)
        m2 += (1.0 - spec.p_low) * side_second_moment(spec.q_high) * hi_span * hi_span;
    const double shift = two_sided_mean(spec) - spec.mean;
    return m2 - shift * shift;
}

double two_sided_cdf(const TwoSidedSpec& spec, double v) {
    if (v < spec.lower) return 0.0;
    if (v >= spec.upper) return 1.0;
    if (v < spec.mean) {
        const double span = spec.mean - spec.lower;
        const double y = (spec.mean - v) / span; // magnitude on the low side
        const double h = std::log1p(y / spec.q_low) / side_log_norm(spec.q_low);
        return spec.p_low * (1.0 - h);
    }
    const double span = spec.upper - spec.mean;
    if (span == 0.0) return 1.0;
    const double y = (v - spec.mean) / span;
    const double h = std::log1p(y / spec.q_high) / side_log_norm(spec.q_high);
    return spec.p_low + (1.0 - spec.p_low) * h;
}

double weibull_trunc_sample(const WeibullSpec& spec, double u) {
    DurationSpec d;
    d.kind = DurationSpec::Kind::weibull;
    d.weibull = spec;
    std::string e = check_duration(d);
    if (!e.empty()) throw std::domain_error("weibull_trunc_sample: " + e);
    if (!(u >= 0.0 && u <= 1.0))
        throw std::domain_error("weibull_trunc_sample: u must be in [0,1]");
    if (u == 0.0 || spec.lower == spec.upper) return spec.lower;
    if (u == 1.0) return spec.upper;
    // F(x) = 1 - exp(-(x/scale)^shape); sample F^{-1}(F(lo) + u (F(hi) - F(lo)))
    auto cdf = [&](double x) { return -std::expm1(-std::pow(x / spec.scale, spec.shape)); };
    const double plo = cdf(spec.lower);
    const double phi = cdf(spec.upper);
    const double p = plo + u * (phi - plo);
    const double x = spec.scale * std::pow(-std::log1p(-p), 1.0 / spec.shape);
    return std::fmin(std::fmax(x, spec.lower), spec.upper);
}

double duration_sample(const DurationSpec& spec, Rng& rng) {
    if (spec.kind == DurationSpec::Kind::two_sided) {
        const double u_side = rng.next_uniform();
        const double u_mag = rng.next_uniform();
        return two_sided_sample(spec.two_sided, u_side, u_mag);
    }
    return weibull_trunc_sample(spec.weibull, rng.next_uniform());
}

} // namespace rops
