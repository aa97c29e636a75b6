#include "rops/kernels/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace rops::kernels {
namespace {

#if defined(__x86_64__) || defined(_M_X64)
bool cpu_has_avx2() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#else
bool cpu_has_avx2() { return false; }
#endif

const Ops& pick() {
    const char* want = std::getenv("ROPS_SIMD");
    if (want && std::strcmp(want, "scalar") == 0) return scalar_ops();
    if (want && std::strcmp(want, "avx2") == 0) {
#if defined(__x86_64__) || defined(_M_X64)
        if (cpu_has_avx2()) return avx2_ops();
#endif
        std::fprintf(stderr, "rops: ROPS_SIMD=avx2 requested but unsupported on this CPU, "
                             "using scalar kernels\n");
        return scalar_ops();
    }
    if (want && want[0] != '\0') {
        std::fprintf(stderr, "rops: unknown ROPS_SIMD value '%s', using auto detection\n", want);
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2()) return avx2_ops();
#endif
    return scalar_ops();
}

} // namespace

const Ops& active_ops() {
    static const Ops& ops = pick();
    return ops;
}

} // namespace rops::kernels
