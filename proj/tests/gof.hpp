#pragma once

// Goodness-of-fit helpers shared by the statistical tests.

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "normwatch/special.hpp"

namespace normwatch::testing {

inline double binomial_pmf(std::int64_t n, double p, std::int64_t k) {
    if (p == 0.0) return k == 0 ? 1.0 : 0.0;
    if (p == 1.0) return k == n ? 1.0 : 0.0;
    const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                           k * std::log(p) + (n - k) * std::log1p(-p);
    return std::exp(log_pmf);
}

struct GofResult {
    double statistic = 0.0;
    double df = 0.0;
    double p_value = 1.0;
};

// Pearson chi-square of observed counts against expected probabilities over
// outcomes 0..probs.size()-1. Adjacent bins are pooled until each expects >= 5.
inline GofResult chi_square_gof(const std::vector<std::int64_t>& observed,
                                const std::vector<double>& probs) {
    double total = 0.0;
    for (auto o : observed) total += static_cast<double>(o);
    std::vector<double> obs_bins, exp_bins;
    double o_acc = 0.0, e_acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        o_acc += k < observed.size() ? static_cast<double>(observed[k]) : 0.0;
        e_acc += probs[k] * total;
        if (e_acc >= 5.0) {
            obs_bins.push_back(o_acc);
            exp_bins.push_back(e_acc);
            o_acc = e_acc = 0.0;
        }
    }
    if (!exp_bins.empty()) {
        obs_bins.back() += o_acc;
        exp_bins.back() += e_acc;
    }
    GofResult r;
    for (std::size_t i = 0; i < obs_bins.size(); ++i)
        r.statistic += (obs_bins[i] - exp_bins[i]) * (obs_bins[i] - exp_bins[i]) / exp_bins[i];
    r.df = static_cast<double>(obs_bins.size()) - 1.0;
    r.p_value = r.df > 0 ? chi_square_sf(r.statistic, r.df) : 1.0;
    return r;
}

// Two-sample chi-square test of homogeneity on integer-valued draws. Bins are
// pooled left to right until the pooled count is at least 10 in each sample.
inline GofResult chi_square_two_sample(const std::vector<std::int64_t>& a,
                                       const std::vector<std::int64_t>& b) {
    std::map<std::int64_t, std::pair<double, double>> hist;
    for (auto v : a) hist[v].first += 1.0;
    for (auto v : b) hist[v].second += 1.0;
    std::vector<std::pair<double, double>> bins;
    std::pair<double, double> acc{0.0, 0.0};
    for (const auto& [_, counts] : hist) {
        acc.first += counts.first;
        acc.second += counts.second;
        if (acc.first + acc.second >= 20.0) {
            bins.push_back(acc);
            acc = {0.0, 0.0};
        }
    }
    if (!bins.empty()) {
        bins.back().first += acc.first;
        bins.back().second += acc.second;
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    GofResult r;
    for (const auto& [ca, cb] : bins) {
        const double row = ca + cb;
        const double ea = row * na / (na + nb);
        const double eb = row * nb / (na + nb);
        r.statistic += (ca - ea) * (ca - ea) / ea + (cb - eb) * (cb - eb) / eb;
    }
    r.df = static_cast<double>(bins.size()) - 1.0;
    r.p_value = r.df > 0 ? chi_square_sf(r.statistic, r.df) : 1.0;
    return r;
}

}  // namespace normwatch::testing
