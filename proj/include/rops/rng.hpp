#pragma once

// Counter-free splitmix64 streams. Every sampling site derives its own
// stream from (root seed, domain tag, stream id) through the splitmix64
// finalizer, so results never depend on thread count or evaluation order:
// task 17's duration draws are the same whether simulated first or last.

#include <cstdint>

namespace rops {

namespace rngdom {
// domain tags keep streams for different purposes disjoint by construction
inline constexpr std::uint64_t duration = 1;
inline constexpr std::uint64_t inner_cost = 2;
inline constexpr std::uint64_t anneal = 3;
inline constexpr std::uint64_t objective = 4;
} // namespace rngdom

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t state) : state_(state) {}

    static Rng stream(std::uint64_t root, std::uint64_t domain, std::uint64_t id) {
        std::uint64_t h = mix64(root);
        h = mix64(h ^ domain);
        h = mix64(h ^ id);
        return Rng(h);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform on [0,1) with 53 random bits
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

  private:
    std::uint64_t state_;
};

} // namespace rops
