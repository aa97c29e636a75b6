// Kernel layer checks: the AVX2 variant must match the scalar reference
// bit-for-bit on every entry point, and the custom exp/log must stay within
// a few ulp of libm across their domains including the special values.

#include <doctest.h>

#include "rops/kernels/kernels.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <random>
#include <vector>

using rops::kernels::Ops;
using rops::kernels::TwoSidedParams;

namespace {

bool have_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

std::uint64_t bits_of(double x) { return std::bit_cast<std::uint64_t>(x); }

bool same_bits(double a, double b) { return bits_of(a) == bits_of(b); }

// distance in representable doubles; NaN pairs count as equal
std::int64_t ulp_diff(double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return 0;
    auto ordered = [](double x) {
        auto i = std::bit_cast<std::int64_t>(x);
        return i < 0 ? std::numeric_limits<std::int64_t>::min() - i : i;
    };
    const auto d = ordered(a) - ordered(b);
    return d < 0 ? -d : d;
}

const std::vector<std::size_t> kSizes{0, 1, 2, 3, 5, 7, 8, 12, 33, 100, 1001};

std::vector<double> uniform_vec(std::size_t n, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

} // namespace

TEST_CASE("exp kernel accuracy against libm") {
    const Ops& ops = rops::kernels::scalar_ops();
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> d(-700.0, 700.0);
    std::int64_t worst = 0;
    for (int i = 0; i < 200000; ++i) {
        const double x = d(rng);
        double y;
        ops.exp_v(&x, &y, 1);
        worst = std::max(worst, ulp_diff(y, std::exp(x)));
    }
    // small arguments dominate actual use
    std::uniform_real_distribution<double> ds(-20.0, 20.0);
    for (int i = 0; i < 200000; ++i) {
        const double x = ds(rng);
        double y;
        ops.exp_v(&x, &y, 1);
        worst = std::max(worst, ulp_diff(y, std::exp(x)));
    }
    CHECK(worst <= 4);

    auto exp1 = [&](double x) {
        double y;
        ops.exp_v(&x, &y, 1);
        return y;
    };
    CHECK(same_bits(exp1(0.0), 1.0));
    CHECK(same_bits(exp1(-0.0), 1.0));
    CHECK(exp1(710.0) == std::numeric_limits<double>::infinity());
    CHECK(exp1(std::numeric_limits<double>::infinity()) ==
          std::numeric_limits<double>::infinity());
    CHECK(exp1(-800.0) == 0.0);
    CHECK(exp1(-std::numeric_limits<double>::infinity()) == 0.0);
    CHECK(std::isnan(exp1(std::numeric_limits<double>::quiet_NaN())));
}

TEST_CASE("log kernel accuracy against libm") {
    const Ops& ops = rops::kernels::scalar_ops();
    std::mt19937_64 rng(43);
    std::int64_t worst = 0;
    std::uniform_real_distribution<double> de(-300.0, 300.0);
    for (int i = 0; i < 200000; ++i) {
        const double x = std::exp2(de(rng));
        double y;
        ops.log_v(&x, &y, 1);
        worst = std::max(worst, ulp_diff(y, std::log(x)));
    }
    std::uniform_real_distribution<double> dn(1e-6, 1e6);
    for (int i = 0; i < 200000; ++i) {
        const double x = dn(rng);
        double y;
        ops.log_v(&x, &y, 1);
        worst = std::max(worst, ulp_diff(y, std::log(x)));
    }
    CHECK(worst <= 4);

    auto log1 = [&](double x) {
        double y;
        ops.log_v(&x, &y, 1);
        return y;
    };
    CHECK(same_bits(log1(1.0), 0.0));
    CHECK(log1(0.0) == -std::numeric_limits<double>::infinity());
    CHECK(std::isnan(log1(-1.0)));
    CHECK(log1(std::numeric_limits<double>::infinity()) ==
          std::numeric_limits<double>::infinity());
    CHECK(std::isnan(log1(std::numeric_limits<double>::quiet_NaN())));
    // subnormal inputs go through the rescale path
    const double sub = 5e-320;
    CHECK(ulp_diff(log1(sub), std::log(sub)) <= 4);
}

TEST_CASE("two-sided map hits bounds and mean exactly") {
    const Ops& ops = rops::kernels::scalar_ops();
    TwoSidedParams p;
    p.mean = 13.0;
    p.lower = 10.0;
    p.upper = 21.0;
    p.q_low = 0.07;
    p.q_high = 0.23;
    p.p_low = 0.375;
    p.log1p_low = std::log1p(1.0 / p.q_low);
    p.log1p_high = std::log1p(1.0 / p.q_high);

    const double side_lo = 0.2, side_hi = 0.9;
    double out;
    double us = side_lo, um = 1.0;
    ops.two_sided_map(&us, &um, &out, 1, p);
    CHECK(same_bits(out, p.lower));
    um = 0.0;
    ops.two_sided_map(&us, &um, &out, 1, p);
    CHECK(same_bits(out, p.lower));
    us = side_hi;
    um = 1.0;
    ops.two_sided_map(&us, &um, &out, 1, p);
    CHECK(same_bits(out, p.upper));
    um = 0.5;
    ops.two_sided_map(&us, &um, &out, 1, p);
    CHECK(same_bits(out, p.mean));
    us = side_lo;
    ops.two_sided_map(&us, &um, &out, 1, p);
    CHECK(same_bits(out, p.mean));

    // everything stays inside [lower, upper], below-mean side below, above side above
    auto u1 = uniform_vec(5000, 0.0, 1.0, 7);
    auto u2 = uniform_vec(5000, 0.0, 1.0, 8);
    std::vector<double> v(5000);
    ops.two_sided_map(u1.data(), u2.data(), v.data(), v.size(), p);
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(v[i] >= p.lower);
        CHECK(v[i] <= p.upper);
        if (u1[i] < p.p_low)
            CHECK(v[i] <= p.mean);
        else
            CHECK(v[i] >= p.mean);
    }
}

TEST_CASE("annealing map range, sign and monotonicity") {
    const Ops& ops = rops::kernels::scalar_ops();
    for (double q : {1.0, 1e-2, 1e-5}) {
        const double l = std::log1p(1.0 / q);
        auto u = uniform_vec(4001, 0.0, 1.0, 11);
        u[0] = 0.0;
        u[1] = 1.0;
        u[2] = 0.5;
        std::vector<double> y(u.size());
        ops.asa_map(u.data(), y.data(), u.size(), q, l);
        CHECK(same_bits(y[0], -1.0));
        CHECK(same_bits(y[1], 1.0));
        CHECK(same_bits(y[2], 0.0));
        for (std::size_t i = 0; i < u.size(); ++i) {
            CHECK(std::fabs(y[i]) <= 1.0);
            if (u[i] > 0.5) CHECK(y[i] >= 0.0);
            if (u[i] < 0.5) CHECK(y[i] <= 0.0);
        }
        // monotone non-decreasing in u
        std::vector<double> grid(1001), yg(1001);
        for (int i = 0; i <= 1000; ++i) grid[i] = i / 1000.0;
        ops.asa_map(grid.data(), yg.data(), grid.size(), q, l);
        for (int i = 1; i <= 1000; ++i) CHECK(yg[i] >= yg[i - 1]);
    }
}

TEST_CASE("scalar and simd kernels match bit for bit") {
    if (!have_avx2()) {
        MESSAGE("no avx2 on this host, skipping equivalence checks");
        return;
    }
#if defined(__x86_64__) || defined(_M_X64)
    const Ops& a = rops::kernels::scalar_ops();
    const Ops& b = rops::kernels::avx2_ops();

    for (std::size_t n : kSizes) {
        CAPTURE(n);
        auto x = uniform_vec(n, -50.0, 50.0, 100 + n);

        CHECK(same_bits(a.sum(x.data(), n), b.sum(x.data(), n)));

        double ma, va, mb, vb;
        a.mean_var(x.data(), n, &ma, &va);
        b.mean_var(x.data(), n, &mb, &vb);
        CHECK(same_bits(ma, mb));
        CHECK(same_bits(va, vb));

        double mna, mxa, mnb, mxb;
        a.minmax(x.data(), n, &mna, &mxa);
        b.minmax(x.data(), n, &mnb, &mxb);
        CHECK(same_bits(mna, mnb));
        CHECK(same_bits(mxa, mxb));

        auto y1 = uniform_vec(n, -5.0, 5.0, 200 + n);
        auto y2 = y1;
        a.add(x.data(), y1.data(), n);
        b.add(x.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(y1[i], y2[i]));

        y1 = uniform_vec(n, -5.0, 5.0, 300 + n);
        y2 = y1;
        a.scale_add(1.7, x.data(), y1.data(), n);
        b.scale_add(1.7, x.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(y1[i], y2[i]));

        auto xe = uniform_vec(n, -746.0, 712.0, 400 + n);
        if (n >= 5) {
            xe[0] = std::numeric_limits<double>::quiet_NaN();
            xe[1] = std::numeric_limits<double>::infinity();
            xe[2] = -std::numeric_limits<double>::infinity();
            xe[3] = 0.0;
            xe[4] = 709.5;
        }
        std::vector<double> e1(n), e2(n);
        a.exp_v(xe.data(), e1.data(), n);
        b.exp_v(xe.data(), e2.data(), n);
        for (std::size_t i = 0; i < n; ++i)
            CHECK((same_bits(e1[i], e2[i]) || (std::isnan(e1[i]) && std::isnan(e2[i]))));

        auto xl = uniform_vec(n, 0.0, 1e8, 500 + n);
        if (n >= 5) {
            xl[0] = 0.0;
            xl[1] = -3.0;
            xl[2] = std::numeric_limits<double>::infinity();
            xl[3] = 5e-320;
            xl[4] = std::numeric_limits<double>::quiet_NaN();
        }
        std::vector<double> l1(n), l2(n);
        a.log_v(xl.data(), l1.data(), n);
        b.log_v(xl.data(), l2.data(), n);
        for (std::size_t i = 0; i < n; ++i)
            CHECK((same_bits(l1[i], l2[i]) || (std::isnan(l1[i]) && std::isnan(l2[i]))));

        auto u = uniform_vec(n, 0.0, 1.0, 600 + n);
        if (n >= 3) {
            u[0] = 0.0;
            u[1] = 1.0;
            u[2] = 0.5;
        }
        std::vector<double> s1(n), s2(n);
        for (double q : {1.0, 1e-3}) {
            const double l = std::log1p(1.0 / q);
            a.asa_map(u.data(), s1.data(), n, q, l);
            b.asa_map(u.data(), s2.data(), n, q, l);
            for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(s1[i], s2[i]));
        }

        TwoSidedParams p;
        p.mean = 4.0;
        p.lower = 1.0;
        p.upper = 11.0;
        p.q_low = 0.05;
        p.q_high = 0.4;
        p.p_low = 0.3;
        p.log1p_low = std::log1p(1.0 / p.q_low);
        p.log1p_high = std::log1p(1.0 / p.q_high);
        auto um = uniform_vec(n, 0.0, 1.0, 700 + n);
        a.two_sided_map(u.data(), um.data(), s1.data(), n, p);
        b.two_sided_map(u.data(), um.data(), s2.data(), n, p);
        for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(s1[i], s2[i]));

        const double fc[3] = {0.4, -0.02, 0.001};
        const double gc[2] = {0.3, 0.05};
        auto sarr = uniform_vec(n, 0.1, 30.0, 800 + n);
        auto darr = uniform_vec(n, -1.0, 1.5, 900 + n);
        const double lla = a.gauss_loglik(sarr.data(), darr.data(), n, fc, 3, gc, 2, 0.25, 1e-9);
        const double llb = b.gauss_loglik(sarr.data(), darr.data(), n, fc, 3, gc, 2, 0.25, 1e-9);
        CHECK(same_bits(lla, llb));

        if (n > 0) {
            auto next = uniform_vec(n + 8, -3.0, 9.0, 1000 + n);
            auto pu = uniform_vec(n, 0.0, 1.0, 1100 + n);
            std::vector<std::int32_t> up(n), dn(n);
            std::mt19937_64 rng(1200 + n);
            for (std::size_t i = 0; i < n; ++i) {
                up[i] = static_cast<std::int32_t>(rng() % (n + 8));
                dn[i] = static_cast<std::int32_t>(rng() % (n + 8));
            }
            std::vector<double> o1(n), o2(n);
            a.backward_step(next.data(), pu.data(), up.data(), dn.data(), 0.97, o1.data(), n);
            b.backward_step(next.data(), pu.data(), up.data(), dn.data(), 0.97, o2.data(), n);
            for (std::size_t i = 0; i < n; ++i) CHECK(same_bits(o1[i], o2[i]));
        }
    }
#endif
}

TEST_CASE("gauss log-density kernel agrees with direct formula") {
    const Ops& ops = rops::kernels::active_ops();
    const double fc[2] = {0.8, -0.03};
    const double gc[3] = {0.5, 0.01, 0.002};
    const double dt = 0.125;
    auto s = uniform_vec(777, 0.5, 20.0, 31);
    auto ds = uniform_vec(777, -0.6, 0.9, 32);
    long double ref = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double f = fc[0] + fc[1] * s[i];
        const double g = gc[0] + gc[1] * s[i] + gc[2] * s[i] * s[i];
        const double r = ds[i] - f * dt;
        ref += -0.5L * std::log(2.0L * 3.14159265358979323846L * g * g * dt) -
               (long double)(r * r) / (2.0L * g * g * dt);
    }
    const double got = ops.gauss_loglik(s.data(), ds.data(), s.size(), fc, 2, gc, 3, dt, 1e-9);
    CHECK(got == doctest::Approx((double)ref).epsilon(1e-12));
}

TEST_CASE("active kernel variant respects detection and override") {
    const Ops& ops = rops::kernels::active_ops();
    const std::string_view name = ops.name;
    CHECK((name == "scalar" || name == "avx2"));
    const char* forced = std::getenv("ROPS_SIMD");
    if (forced && std::string_view(forced) == "scalar") {
        CHECK(name == "scalar");
    } else if (!forced && have_avx2()) {
        CHECK(name == "avx2");
    }
}
