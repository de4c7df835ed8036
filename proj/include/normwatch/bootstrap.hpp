#pragma once

// Compound-uncertainty bootstrap for stratified prevalence estimates. Every
// iteration resamples the classified study sample, each stratum's annotated
// flagged set and the shared false-negative pool, rebuilds every stratum's
// population and aggregates the results.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "normwatch/annotation.hpp"
#include "normwatch/rng.hpp"

namespace normwatch {

using CategoryCounts = std::array<std::int64_t, 8>;

struct StratumEvidence {
    std::string stratum_id;
    std::int64_t population_online = 0;     // N_s
    std::int64_t population_moderated = 0;
    // Classified study sample: size n_s and how many of its comments were
    // flagged. Resampling the sample with replacement only depends on these.
    std::int64_t sample_size = 0;
    std::int64_t sample_flagged = 0;
    std::vector<AnnotatedComment> annotated_flagged;
};

struct FalseNegativePool {
    std::vector<AnnotatedComment> items;
};

enum class CategoryAggregation { pooled, stratum_mean };

struct BootstrapConfig {
    int iterations = 1000;
    std::uint64_t seed = 0;
    double ci_level = 0.95;
    double ablation_fraction = 1.0;
    int flag_threshold = 80;  // agreement votes used when the sample was flagged
    int threads = 0;  // 0: hardware concurrency
    bool reference_simulation = false;
    CategoryAggregation category_aggregation = CategoryAggregation::pooled;
};

// Throws std::invalid_argument for out-of-range fields.
void validate(const BootstrapConfig& config);

struct TpResample {
    double p_tp = 0.0;
    // Category sets of the violating items in the resample, with multiplicity.
    std::vector<CategorySet> category_source;
    bool empty_annotations = false;
};

// a_s draws with replacement from the annotated flagged set. An empty set
// yields p_tp = 0 and empty_annotations = true.
TpResample resample_tp(const StratumEvidence& evidence, Rng& rng);

struct FnResample {
    double p_fn = 0.0;
    std::vector<CategorySet> category_source;
};

// Same-size resample with replacement of the false-negative pool.
FnResample resample_fn(const FalseNegativePool& pool, Rng& rng);

struct StratumDraw {
    std::int64_t flagged = 0;
    std::int64_t flagged_violating = 0;
    std::int64_t unflagged_violating = 0;
    CategoryCounts categories{};

    std::int64_t violating() const { return flagged_violating + unflagged_violating; }
};

// Binomial aggregation: F ~ Bin(N, q), flagged violations ~ Bin(F, p_tp),
// unflagged violations ~ Bin(N - F, p_fn). Each violation takes the category
// set of a uniformly drawn item of the matching source.
StratumDraw simulate_stratum(std::int64_t population, double flag_rate, double p_tp, double p_fn,
                             std::span<const CategorySet> tp_source, std::span<const CategorySet> fn_source,
                             Rng& rng);

// Literal per-comment version of simulate_stratum, O(population). Reference
// oracle for the aggregated sampler.
StratumDraw simulate_stratum_reference(std::int64_t population, double flag_rate, double p_tp, double p_fn,
                                       std::span<const CategorySet> tp_source,
                                       std::span<const CategorySet> fn_source, Rng& rng);

struct BootstrapEstimate {
    double median = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::vector<double> samples;
};

// Linear interpolation between order statistics (h = (n - 1) q).
double percentile(std::span<const double> sorted, double q);

// Median and equal-tailed percentile interval.
BootstrapEstimate summarize(std::vector<double> samples, double ci_level);

struct IterationResult {
    double overall_rate = 0.0;
    std::vector<std::int64_t> stratum_violating;  // indexed like the input strata
    std::vector<double> stratum_rate;
    CategoryCounts category_counts{};
    std::array<double, 8> category_proportion{};        // pooled
    std::array<double, 8> category_proportion_mean{};   // averaged over strata with violations
    std::int64_t total_violating = 0;
    int empty_annotation_strata = 0;
};

struct BootstrapResult {
    BootstrapConfig config;
    std::vector<std::string> stratum_ids;
    std::vector<std::int64_t> populations;
    std::vector<IterationResult> iterations;
    BootstrapEstimate overall;
    std::vector<BootstrapEstimate> per_stratum;
    std::array<BootstrapEstimate, 8> category_proportion;
    std::array<BootstrapEstimate, 8> category_count;
    // Strata whose annotated set was empty (p_tp forced to 0).
    std::vector<std::string> warnings;
};

// Runs config.iterations bootstrap iterations. Each (iteration, stratum) pair
// draws from its own substream of config.seed, so results do not depend on
// the number of worker threads.
BootstrapResult run(const BootstrapConfig& config, std::span<const StratumEvidence> strata,
                    const FalseNegativePool& pool);

// Keeps floor(fraction * a_s) annotated items per stratum, drawn once from the
// seed. fraction = 1 keeps every item in its original order.
std::vector<StratumEvidence> ablate_evidence(std::span<const StratumEvidence> strata, double fraction,
                                             std::uint64_t seed);

BootstrapResult ablate(BootstrapConfig config, std::span<const StratumEvidence> strata,
                       const FalseNegativePool& pool, double fraction);

struct ModerationRate {
    BootstrapEstimate estimate;
    int excluded_iterations = 0;
    bool defined = false;  // false when every iteration was excluded
};

// Per iteration: resample the moderated sample with replacement, scale its
// category counts to the moderated population, and divide by moderated plus
// online violations of that category. online_counts holds one entry per
// iteration (for example BootstrapResult category counts).
std::array<ModerationRate, 8> moderation_rate_by_category(std::span<const CategoryCounts> online_counts,
                                                          std::span<const AnnotatedComment> moderated_sample,
                                                          std::int64_t population_moderated_total,
                                                          std::uint64_t seed, double ci_level);

struct PeriodRate {
    std::string stratum_id;
    double rate = 0.0;
    std::int64_t population = 0;
};

struct PermutationResult {
    double statistic = 0.0;  // weighted mean rate of A minus B
    double p_value = 1.0;
    std::size_t pairs = 0;
};

// Strata present in both periods are paired; period labels are swapped within
// pairs at random. p = (1 + #{|stat*| >= |stat|}) / (n_perm + 1).
PermutationResult permutation_test(std::span<const PeriodRate> a, std::span<const PeriodRate> b, int n_perm,
                                   std::uint64_t seed);

struct EvidenceSet {
    std::vector<StratumEvidence> strata;
    FalseNegativePool pool;
    std::vector<AnnotatedComment> moderated;
    bool has_moderated = false;
};

// Reads sample.csv (stratum_id,population_online,population_moderated,
// sample_size,flagged), flagged.csv, unflagged.csv and optional moderated.csv.
EvidenceSet load_evidence(const std::filesystem::path& dir);

}  // namespace normwatch
