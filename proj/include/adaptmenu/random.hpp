#pragma once

// Seeded random source shared by every stochastic routine. The standard
// distributions are implementation-defined, so the integer and real draws
// are derived directly from the mt19937_64 output to keep results identical
// across standard libraries.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace adaptmenu {

class Rng
{
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n)
    {
        if (n == 0) {
            throw std::invalid_argument("Rng::index: empty range");
        }
        // Rejection sampling removes modulo bias.
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return static_cast<std::size_t>(x % bound);
    }

    /// Uniform real in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Index drawn from unnormalized non-negative weights.
    std::size_t weighted(std::span<const double> weights)
    {
        double total = 0.0;
        for (double w : weights) {
            total += w;
        }
        if (!(total > 0.0)) {
            throw std::invalid_argument("Rng::weighted: weights have no support");
        }
        const double u = uniform() * total;
        double acc = 0.0;
        std::size_t last = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) {
                continue;
            }
            acc += weights[i];
            last = i;
            if (u < acc) {
                return i;
            }
        }
        return last;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::span<T> values)
    {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0)
{
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace adaptmenu
