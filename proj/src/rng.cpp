#include "normwatch/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace normwatch {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

// Stirling-series tail log(k!) - [ (k+1/2)log(k+1) - (k+1) + log(2pi)/2 ].
double stirling_tail(double k) {
    static constexpr double kTail[] = {0.0810614667953272,  0.0413406959554092,
                                       0.0276779256849983,  0.02079067210376509,
                                       0.0166446911898211,  0.0138761288230707,
                                       0.0118967099458917,  0.0104112652619720,
                                       0.00925546218271273, 0.00833056343336287};
    if (k <= 9) return kTail[static_cast<int>(k)];
    double kp1sq = (k + 1) * (k + 1);
    return (1.0 / 12 - (1.0 / 360 - 1.0 / 1260 / kp1sq) / kp1sq) / (k + 1);
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
}

Rng Rng::stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t state = seed ^ 0x6a09e667f3bcc908ULL;
    std::uint64_t mixed = splitmix64(state);
    for (std::uint64_t key : keys) {
        state = mixed ^ (key + 0x9e3779b97f4a7c15ULL + (mixed << 6) + (mixed >> 2));
        mixed = splitmix64(state);
    }
    return Rng(mixed);
}

std::uint64_t Rng::next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::below: bound must be positive");
    // Lemire's multiply-shift with rejection of the biased low region.
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(next()) * bound;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

std::int64_t Rng::binomial(std::int64_t n, double p) {
    if (n < 0 || !(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("Rng::binomial: need n >= 0 and p in [0,1]");
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;
    if (p > 0.5) return n - binomial(n, 1.0 - p);
    if (static_cast<double>(n) * p < 10.0) return binomial_inversion(n, p);
    return binomial_btrs(n, p);
}

// Counts geometric waiting times until they overrun n.
std::int64_t Rng::binomial_inversion(std::int64_t n, double p) {
    const double log_q = std::log1p(-p);
    const auto count = static_cast<double>(n);
    double geom_sum = 0.0;
    std::int64_t successes = 0;
    while (true) {
        const double u = 1.0 - uniform();  // (0, 1]
        geom_sum += std::ceil(std::log(u) / log_q);
        if (geom_sum > count) break;
        ++successes;
    }
    return successes;
}

std::int64_t Rng::binomial_btrs(std::int64_t n, double p) {
    const auto count = static_cast<double>(n);
    const double stddev = std::sqrt(count * p * (1.0 - p));
    const double b = 1.15 + 2.53 * stddev;
    const double a = -0.0873 + 0.0248 * b + 0.01 * p;
    const double c = count * p + 0.5;
    const double v_r = 0.92 - 4.2 / b;
    const double r = p / (1.0 - p);
    const double alpha = (2.83 + 5.1 / b) * stddev;
    const double m = std::floor((count + 1) * p);

    while (true) {
        const double u = uniform() - 0.5;
        double v = uniform();
        const double us = 0.5 - std::abs(u);
        const double k = std::floor((2 * a / us + b) * u + c);

        if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(k);
        if (k < 0 || k > count) continue;

        v = std::log(v * alpha / (a / (us * us) + b));
        const double bound = (m + 0.5) * std::log((m + 1) / (r * (count - m + 1))) +
                             (count + 1) * std::log((count - m + 1) / (count - k + 1)) +
                             (k + 0.5) * std::log(r * (count - k + 1) / (k + 1)) +
                             stirling_tail(m) + stirling_tail(count - m) - stirling_tail(k) -
                             stirling_tail(count - k);
        if (v <= bound) return static_cast<std::int64_t>(k);
    }
}

}  // namespace normwatch
