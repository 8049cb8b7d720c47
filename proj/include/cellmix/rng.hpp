#pragma once

#include <cstdint>

namespace cellmix {

// SplitMix64: tiny deterministic generator used for jittered sampling and
// Monte Carlo pair draws.  Results must be reproducible across platforms and
// worker counts, so we avoid std distributions (whose output is
// implementation-defined) and derive uniforms directly from the bits.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    // Decorrelated child stream (for per-task substreams with a fixed id).
    Rng fork(std::uint64_t id) const {
        Rng child(state_ ^ (0x632be59bd9b4e019ULL * (id + 1)));
        child.next_u64();
        return child;
    }

  private:
    std::uint64_t state_;
};

} // namespace cellmix
