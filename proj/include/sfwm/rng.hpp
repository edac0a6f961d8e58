#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace sfwm {

/// Deterministic uniform generator. std::mt19937_64 has a fully specified
/// output sequence; the [0,1) mapping below avoids std::uniform_real_distribution,
/// whose output is implementation-defined, so seeded runs reproduce across
/// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::complex<double> unit_phase() {
        const double t = uniform(0.0, 2.0 * 3.14159265358979323846);
        return {std::cos(t), std::sin(t)};
    }

    std::complex<double> complex_in_disc(double radius = 1.0) {
        return radius * std::sqrt(uniform()) * unit_phase();
    }

    int integer(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform() * static_cast<double>(hi - lo + 1));
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace sfwm
