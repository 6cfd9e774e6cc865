#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace splate {

/// Seeded generator with portable uniform/normal draws.
///
/// std::mt19937_64's output sequence is fixed by the standard, but the
/// std::*_distribution adaptors are not, so the draws below are computed by
/// hand to keep synthetic data identical across standard libraries.
class rng {
public:
    explicit rng(std::uint64_t seed) : m_engine(seed) {}

    std::uint64_t next_u64() { return m_engine(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    double normal()
    {
        if (m_has_spare) {
            m_has_spare = false;
            return m_spare;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * std::numbers::pi * u2;
        m_spare = radius * std::sin(angle);
        m_has_spare = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 m_engine;
    bool m_has_spare = false;
    double m_spare = 0.0;
};

/// SplitMix64 finalizer, used to derive independent sub-seeds and hash keys.
constexpr std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    return mix64(seed ^ mix64(stream + 0x51a7e));
}

}  // namespace splate
