#pragma once

// Deterministic random streams.
//
// Every randomized stage draws from an Rng derived from an explicit seed plus a
// tuple of stream keys, so results never depend on thread scheduling, on the
// standard library's distribution implementations, or on the platform.
// Generator: xoshiro256** seeded through splitmix64. Bump kRngVersion if any
// derivation or sampling routine below changes its output.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace normwatch {

inline constexpr std::string_view kRngName = "xoshiro256starstar";
inline constexpr int kRngVersion = 1;

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a; used to turn string keys (stratum ids) into stream keys.
inline std::uint64_t stable_hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
public:
    static constexpr const char* kName = "xoshiro256**";

    explicit Rng(std::uint64_t seed);

    // Independent substream for (seed, keys...). Same inputs, same stream.
    static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

    std::uint64_t next();

    // Uniform on [0, 1) with 53 bits of resolution.
    double uniform();

    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    bool bernoulli(double p) { return uniform() < p; }

    // Exact Binomial(n, p) draw. Inversion for small means, Hormann's BTRS
    // transformed rejection otherwise.
    std::int64_t binomial(std::int64_t n, double p);

    // Weights for each outcome; returns counts summing to n. Sequential
    // conditional binomials, so the result is exactly multinomial.
    template <typename Container>
    void multinomial(std::int64_t n, const Container& weights, Container& counts);

private:
    std::int64_t binomial_inversion(std::int64_t n, double p);
    std::int64_t binomial_btrs(std::int64_t n, double p);

    std::array<std::uint64_t, 4> s_{};
};

template <typename Container>
void Rng::multinomial(std::int64_t n, const Container& weights, Container& counts) {
    double remaining_weight = 0.0;
    for (auto w : weights) remaining_weight += static_cast<double>(w);
    std::int64_t remaining = n;
    const std::size_t last = weights.size() == 0 ? 0 : weights.size() - 1;
    std::size_t i = 0;
    for (auto w : weights) {
        std::int64_t draw = 0;
        if (remaining > 0 && w > 0) {
            if (i == last) {
                draw = remaining;
            } else {
                double p = static_cast<double>(w) / remaining_weight;
                draw = p >= 1.0 ? remaining : binomial(remaining, p);
            }
        }
        counts[i++] = static_cast<typename Container::value_type>(draw);
        remaining -= draw;
        remaining_weight -= static_cast<double>(w);
    }
}

}  // namespace normwatch
