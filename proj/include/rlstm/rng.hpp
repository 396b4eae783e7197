#ifndef RLSTM_RNG_HPP
#define RLSTM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace rlstm {

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed, a label and an index.
/// Every subsystem draws its randomness through a labelled seed so that adding
/// a consumer never shifts the streams of the others.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0)
{
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(mix64(seed ^ h) + index);
}

/// Seeded random source. The engine is std::mt19937_64 (fully specified by the
/// standard); the transforms to uniform and normal variates are done here
/// because the std distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi)
    {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t limit = span == 0 ? 0 : (~std::uint64_t{0} / span) * span;
        std::uint64_t x = engine_();
        while (span != 0 && x >= limit)
            x = engine_();
        return lo + static_cast<std::int64_t>(span == 0 ? x : x % span);
    }

    /// Standard normal via Box-Muller.
    double normal()
    {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle on top of Rng::uniform_int (std::shuffle is not
/// portable across standard libraries).
template <typename Container>
void shuffle(Container& c, Rng& rng)
{
    for (std::int64_t i = static_cast<std::int64_t>(c.size()) - 1; i > 0; --i) {
        const auto j = rng.uniform_int(0, i);
        using std::swap;
        swap(c[static_cast<std::size_t>(i)], c[static_cast<std::size_t>(j)]);
    }
}

} // namespace rlstm

#endif // RLSTM_RNG_HPP
