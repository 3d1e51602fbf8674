#pragma once

// Portable, seedable noise sources. The engine is std::mt19937_64, whose
// output sequence is fixed by the standard; the uniform and normal
// transforms are written out here because the standard library
// distributions are implementation-defined.

#include "geoadcs/math.hpp"

#include <cstdint>
#include <random>

namespace geoadcs {

/// Independent streams, one per noise source, so that swapping the field
/// model does not shift the draws of unrelated sources.
enum class NoiseStream : std::uint64_t {
    environment = 1,
    magnetometer = 2,
    sun_sensor = 3,
    disturbance = 4,
};

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    Rng(std::uint64_t seed, NoiseStream stream) : engine_(mix(seed, static_cast<std::uint64_t>(stream))) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via the Box-Muller transform (one value per call,
    /// the sine branch is cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    Vec3 normal3(double mean, double sigma) {
        const double x = normal(mean, sigma);
        const double y = normal(mean, sigma);
        const double z = normal(mean, sigma);
        return {x, y, z};
    }

private:
    // splitmix64 finaliser
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace geoadcs
