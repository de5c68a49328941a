#pragma once

#include <cmath>
#include <cstdint>

#include "mvwave/errors.hpp"

namespace mvwave::rng {

// Counter-based streams: the i-th draw of a stream is a pure function of
// (master seed, particle index, purpose tag, i).  Replaying a stream gives
// identical bits regardless of scheduling or thread count.

enum class Purpose : std::uint64_t {
    WienerIncrements = 0x01,
    JumpCount = 0x02,
    JumpTimes = 0x03,
    JumpMarks = 0x04,
    InitialPosition = 0x05,
    InitialVelocity = 0x06,
    CompensatorMarks = 0x07,
    Diagnostics = 0x08,
    Bootstrap = 0x09,
    Fuzz = 0x0a,
};

// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t derive_key(std::uint64_t master_seed,
                                          std::uint64_t substream,
                                          Purpose purpose) {
    std::uint64_t k = mix64(master_seed ^ 0xa5a5a5a5a5a5a5a5ULL);
    k = mix64(k ^ (substream * 0xd1342543de82ef95ULL));
    k = mix64(k ^ (static_cast<std::uint64_t>(purpose) * 0x9e3779b97f4a7c15ULL));
    return k;
}

class CounterStream {
  public:
    CounterStream(std::uint64_t master_seed, std::uint64_t substream, Purpose purpose)
        : key_(derive_key(master_seed, substream, purpose)) {}

    std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

    // Uniform on [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform01_open_low() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Standard normal via Box-Muller; the second draw of each pair is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform01_open_low();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(th);
        has_cached_ = true;
        return r * std::cos(th);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Poisson count by inversion of exponential interarrivals, chunked so the
    // running product never underflows.
    std::uint64_t poisson(double mean) {
        if (!(mean >= 0.0)) throw contract_error("poisson: mean must be >= 0");
        std::uint64_t total = 0;
        double remaining = mean;
        while (remaining > 0.0) {
            const double chunk = remaining > 60.0 ? 60.0 : remaining;
            remaining -= chunk;
            const double limit = std::exp(-chunk);
            double prod = 1.0;
            std::uint64_t k = 0;
            for (;;) {
                prod *= uniform01_open_low();
                if (prod <= limit) break;
                ++k;
            }
            total += k;
        }
        return total;
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace mvwave::rng
