#pragma once

// Generative fixtures with known parameters, used by the calibration checks
// and the desk-scale demo data.

#include <array>
#include <cstdint>
#include <vector>

#include "normwatch/bootstrap.hpp"
#include "normwatch/stats.hpp"

namespace normwatch {

struct SyntheticEvidenceParams {
    int strata = 5;
    std::int64_t population = 1'000'000;  // online comments per stratum
    std::int64_t population_moderated = 50'000;
    std::int64_t sample_size = 5000;  // classified study sample per stratum
    int annotated = 32;               // annotated flagged comments per stratum
    int pool_size = 1000;             // false-negative pool
    double flag_rate = 0.25;
    double p_tp = 0.2;
    double p_fn = 0.01;
    // Relative weight of each category for violating comments; every
    // violating comment carries exactly one category.
    std::array<double, 8> category_weights{1, 1, 1, 1, 1, 1, 1, 1};
};

// Expected violation rate of the generator: q p_tp + (1 - q) p_fn.
double expected_prevalence(const SyntheticEvidenceParams& params);

// Draws one evidence set: flag counts ~ Bin(n, q), annotated flagged items
// violating with probability p_tp, pool items violating with probability p_fn.
EvidenceSet synthesize_evidence(const SyntheticEvidenceParams& params, std::uint64_t seed);

struct SyntheticRegressionParams {
    int strata = 97;
    double intercept = -6.0;
    double log_ratio = -0.7;  // coefficient of log(moderators / comments)
    double nsfw = 2.0;
    double hobbies = -2.0;
};

// Strata cycling through general content, NSFW, hobbies and occupations, and
// humor (no effect). Comment totals are log-uniform in [1e4, 1e6] and
// log(moderators / comments) is roughly uniform in [-5.5, -3.5]. Violation
// counts are Binomial(N, rate) with rate = exp(linear predictor), so their
// mean follows the Poisson model.
std::vector<RegressionRow> synthesize_regression_rows(const SyntheticRegressionParams& params, std::uint64_t seed);

}  // namespace normwatch
