#pragma once

#include <cstdint>
#include <string_view>

#include "vortex/vec2.hpp"

namespace vortex {

/// Counter-based deterministic generator. Every draw is a pure function of
/// (seed, stream name, counter), so independent streams can be consumed in
/// any order without changing each other's values.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view stream)
        : state_(mix(seed ^ fnv1a(stream))) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform angle in [0, 2*pi).
    double angle() { return uniform() * 6.283185307179586476925286766559; }

    Vec2 unit_vector() {
        const double a = angle();
        return {std::cos(a), std::sin(a)};
    }

    /// Uniform point in the disc of given radius around the center.
    Vec2 in_disc(Vec2 center, double radius) {
        const double r = radius * std::sqrt(uniform());
        return center + r * unit_vector();
    }

private:
    static constexpr std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 1469598103934665603ull;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return h;
    }

    // splitmix64 finalizer; counter mode keeps draws independent of call site.
    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t next() { return mix(state_ + ++counter_); }

    std::uint64_t state_;
    std::uint64_t counter_ = 0;
};

}  // namespace vortex
