#pragma once

#include <cmath>
#include <cstdint>

namespace qbsde {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// Stafford "Mix13" finalizer. Bijective on 64-bit words with full avalanche.
inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

} // namespace detail

// Stream ids keep independent uses of one seed from colliding.
inline constexpr std::uint64_t kStreamPrimary   = 0; // driving Brownian increments
inline constexpr std::uint64_t kStreamCoupling  = 1; // auxiliary increments for coupled motions
inline constexpr std::uint64_t kStreamValidate  = 2; // driver validation sampling
inline constexpr std::uint64_t kStreamDomain    = 3; // subharmonicity domain sampling
inline constexpr std::uint64_t kStreamBasePick  = 4; // base-point selection for auto test functions

/// Counter-based random source. Every draw is a pure function of
/// (seed, stream, path, step, slot), so ensembles are reproducible bit for
/// bit under any thread partition of the path range. There is no mutable
/// state to share or to seed per thread.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream) {}

    std::uint64_t word(std::uint64_t path, std::uint64_t step, std::uint64_t slot) const {
        using detail::kGolden;
        using detail::mix64;
        std::uint64_t h = mix64(seed_ + kGolden);
        h = mix64(h ^ (stream_ + 0x6C62272E07BB0142ULL));
        h = mix64(h ^ (path + kGolden));
        h = mix64(h ^ (step + kGolden));
        h = mix64(h ^ (slot + kGolden));
        return h;
    }

    /// Uniform draw in (0, 1].
    double uniform(std::uint64_t path, std::uint64_t step, std::uint64_t slot) const {
        return static_cast<double>((word(path, step, slot) >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal draw; `slot` indexes independent normals at one
    /// (path, step) counter. Box-Muller on two uniform words.
    double gaussian(std::uint64_t path, std::uint64_t step, std::uint64_t slot) const {
        const double u1 = uniform(path, step, 2 * slot);
        const double u2 = uniform(path, step, 2 * slot + 1);
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
};

} // namespace qbsde
