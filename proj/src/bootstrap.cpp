#include "normwatch/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "normwatch/textio.hpp"

namespace normwatch {

namespace {

void check_rate(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
}

void add_categories(CategoryCounts& counts, CategorySet set, std::int64_t times) {
    for (auto c : set.members()) counts[static_cast<std::size_t>(c)] += times;
}

// Distributes `violations` over the category sets of `source` as if each
// violation drew one item uniformly.
void assign_categories(std::int64_t violations, std::span<const CategorySet> source, CategoryCounts& counts,
                       Rng& rng) {
    if (violations == 0) return;
    if (source.empty()) throw std::invalid_argument("violations drawn with an empty category source");
    std::array<std::int64_t, 256> weights{};
    for (auto s : source) ++weights[s.bits()];
    std::array<std::int64_t, 256> draws{};
    rng.multinomial(violations, weights, draws);
    for (std::size_t bits = 0; bits < draws.size(); ++bits)
        if (draws[bits] > 0) add_categories(counts, CategorySet::from_bits(static_cast<std::uint8_t>(bits)), draws[bits]);
}

std::uint64_t iteration_key() {
    static const std::uint64_t key = stable_hash("iter");
    return key;
}

struct PreparedStratum {
    const StratumEvidence* evidence = nullptr;
    std::uint64_t key = 0;
};

IterationResult run_iteration(const BootstrapConfig& config, std::span<const PreparedStratum> strata,
                              const FalseNegativePool& pool, std::int64_t total_population, std::uint64_t i) {
    IterationResult out;
    out.stratum_violating.resize(strata.size());
    out.stratum_rate.resize(strata.size());

    Rng fn_rng = Rng::stream(config.seed, {iteration_key(), i, stable_hash("fn-pool")});
    const FnResample fn = resample_fn(pool, fn_rng);

    std::array<double, 8> proportion_sum{};
    int strata_with_violations = 0;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        const StratumEvidence& ev = *strata[s].evidence;
        Rng rng = Rng::stream(config.seed, {iteration_key(), i, strata[s].key});
        double flag_rate = 0.0;
        if (ev.sample_size > 0) {
            const double q = static_cast<double>(ev.sample_flagged) / static_cast<double>(ev.sample_size);
            flag_rate = static_cast<double>(rng.binomial(ev.sample_size, q)) / static_cast<double>(ev.sample_size);
        }
        const TpResample tp = resample_tp(ev, rng);
        if (tp.empty_annotations) ++out.empty_annotation_strata;
        const StratumDraw draw =
            config.reference_simulation
                ? simulate_stratum_reference(ev.population_online, flag_rate, tp.p_tp, fn.p_fn, tp.category_source,
                                             fn.category_source, rng)
                : simulate_stratum(ev.population_online, flag_rate, tp.p_tp, fn.p_fn, tp.category_source,
                                   fn.category_source, rng);
        const std::int64_t v = draw.violating();
        out.stratum_violating[s] = v;
        out.stratum_rate[s] =
            ev.population_online > 0 ? static_cast<double>(v) / static_cast<double>(ev.population_online) : 0.0;
        out.total_violating += v;
        for (std::size_t c = 0; c < 8; ++c) out.category_counts[c] += draw.categories[c];
        if (v > 0) {
            ++strata_with_violations;
            for (std::size_t c = 0; c < 8; ++c)
                proportion_sum[c] += static_cast<double>(draw.categories[c]) / static_cast<double>(v);
        }
    }
    out.overall_rate = static_cast<double>(out.total_violating) / static_cast<double>(total_population);
    for (std::size_t c = 0; c < 8; ++c) {
        out.category_proportion[c] = out.total_violating > 0 ? static_cast<double>(out.category_counts[c]) /
                                                                   static_cast<double>(out.total_violating)
                                                             : 0.0;
        out.category_proportion_mean[c] =
            strata_with_violations > 0 ? proportion_sum[c] / strata_with_violations : 0.0;
    }
    return out;
}

std::vector<AnnotatedComment> group_stratum(const std::vector<AnnotatedComment>& rows, const std::string& stratum) {
    std::vector<AnnotatedComment> out;
    for (const auto& r : rows)
        if (r.stratum_id == stratum) out.push_back(r);
    return out;
}

}  // namespace

void validate(const BootstrapConfig& config) {
    if (config.iterations < 1) throw std::invalid_argument("iterations must be at least 1");
    if (!(config.ci_level > 0.0 && config.ci_level < 1.0)) throw std::invalid_argument("ci_level must be in (0, 1)");
    if (!(config.ablation_fraction > 0.0 && config.ablation_fraction <= 1.0))
        throw std::invalid_argument("ablation_fraction must be in (0, 1]");
    if (config.threads < 0) throw std::invalid_argument("threads must be >= 0");
}

TpResample resample_tp(const StratumEvidence& evidence, Rng& rng) {
    TpResample out;
    const auto& items = evidence.annotated_flagged;
    if (items.empty()) {
        out.empty_annotations = true;
        return out;
    }
    std::size_t violating = 0;
    for (std::size_t k = 0; k < items.size(); ++k) {
        const auto& item = items[rng.below(items.size())];
        if (item.violating) {
            ++violating;
            out.category_source.push_back(item.categories);
        }
    }
    out.p_tp = static_cast<double>(violating) / static_cast<double>(items.size());
    return out;
}

FnResample resample_fn(const FalseNegativePool& pool, Rng& rng) {
    if (pool.items.empty()) throw std::invalid_argument("false-negative pool is empty");
    FnResample out;
    std::size_t violating = 0;
    for (std::size_t k = 0; k < pool.items.size(); ++k) {
        const auto& item = pool.items[rng.below(pool.items.size())];
        if (item.violating) {
            ++violating;
            out.category_source.push_back(item.categories);
        }
    }
    out.p_fn = static_cast<double>(violating) / static_cast<double>(pool.items.size());
    return out;
}

StratumDraw simulate_stratum(std::int64_t population, double flag_rate, double p_tp, double p_fn,
                             std::span<const CategorySet> tp_source, std::span<const CategorySet> fn_source,
                             Rng& rng) {
    if (population < 0) throw std::invalid_argument("population must be >= 0");
    check_rate(flag_rate, "flag_rate");
    check_rate(p_tp, "p_tp");
    check_rate(p_fn, "p_fn");
    StratumDraw d;
    d.flagged = rng.binomial(population, flag_rate);
    d.flagged_violating = rng.binomial(d.flagged, p_tp);
    d.unflagged_violating = rng.binomial(population - d.flagged, p_fn);
    assign_categories(d.flagged_violating, tp_source, d.categories, rng);
    assign_categories(d.unflagged_violating, fn_source, d.categories, rng);
    return d;
}

StratumDraw simulate_stratum_reference(std::int64_t population, double flag_rate, double p_tp, double p_fn,
                                       std::span<const CategorySet> tp_source,
                                       std::span<const CategorySet> fn_source, Rng& rng) {
    if (population < 0) throw std::invalid_argument("population must be >= 0");
    check_rate(flag_rate, "flag_rate");
    check_rate(p_tp, "p_tp");
    check_rate(p_fn, "p_fn");
    StratumDraw d;
    for (std::int64_t k = 0; k < population; ++k) {
        const bool flagged = rng.bernoulli(flag_rate);
        const auto source = flagged ? tp_source : fn_source;
        if (!rng.bernoulli(flagged ? p_tp : p_fn)) {
            d.flagged += flagged;
            continue;
        }
        if (source.empty()) throw std::invalid_argument("violations drawn with an empty category source");
        add_categories(d.categories, source[rng.below(source.size())], 1);
        if (flagged) {
            ++d.flagged;
            ++d.flagged_violating;
        } else {
            ++d.unflagged_violating;
        }
    }
    return d;
}

double percentile(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("percentile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BootstrapEstimate summarize(std::vector<double> samples, double ci_level) {
    if (samples.empty()) throw std::invalid_argument("summarize needs at least one sample");
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw std::invalid_argument("ci_level must be in (0, 1)");
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const double tail = (1.0 - ci_level) / 2.0;
    BootstrapEstimate e;
    e.median = percentile(sorted, 0.5);
    e.ci_low = percentile(sorted, tail);
    e.ci_high = percentile(sorted, 1.0 - tail);
    e.samples = std::move(samples);
    return e;
}

BootstrapResult run(const BootstrapConfig& config, std::span<const StratumEvidence> input,
                    const FalseNegativePool& pool) {
    validate(config);
    if (input.empty()) throw std::invalid_argument("bootstrap needs at least one stratum");
    if (pool.items.empty()) throw std::invalid_argument("false-negative pool is empty");

    std::vector<StratumEvidence> ablated;
    std::span<const StratumEvidence> strata = input;
    if (config.ablation_fraction < 1.0) {
        ablated = ablate_evidence(input, config.ablation_fraction, config.seed);
        strata = ablated;
    }

    BootstrapResult result;
    result.config = config;
    std::set<std::string> seen;
    std::vector<PreparedStratum> prepared;
    std::int64_t total_population = 0;
    for (const auto& ev : strata) {
        if (!seen.insert(ev.stratum_id).second) throw std::invalid_argument("duplicate stratum " + ev.stratum_id);
        if (ev.population_online < 0 || ev.sample_size < 0 || ev.sample_flagged < 0 ||
            ev.sample_flagged > ev.sample_size)
            throw std::invalid_argument("invalid counts for stratum " + ev.stratum_id);
        for (const auto& a : ev.annotated_flagged)
            if (!a.flagged) throw std::invalid_argument("unflagged item in the annotated set of " + ev.stratum_id);
        if (ev.annotated_flagged.empty())
            result.warnings.push_back("stratum " + ev.stratum_id + " has no annotated flagged comments; p_tp = 0");
        prepared.push_back({&ev, stable_hash(ev.stratum_id)});
        result.stratum_ids.push_back(ev.stratum_id);
        result.populations.push_back(ev.population_online);
        total_population += ev.population_online;
    }
    if (total_population <= 0) throw std::invalid_argument("total online population must be positive");

    const auto n = static_cast<std::size_t>(config.iterations);
    result.iterations.resize(n);
    unsigned workers = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                          : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++)
            result.iterations[i] = run_iteration(config, prepared, pool, total_population, i);
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> threads;
        for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work);
    }

    std::vector<double> overall(n);
    for (std::size_t i = 0; i < n; ++i) overall[i] = result.iterations[i].overall_rate;
    result.overall = summarize(std::move(overall), config.ci_level);
    for (std::size_t s = 0; s < prepared.size(); ++s) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = result.iterations[i].stratum_rate[s];
        result.per_stratum.push_back(summarize(std::move(v), config.ci_level));
    }
    const bool pooled = config.category_aggregation == CategoryAggregation::pooled;
    for (std::size_t c = 0; c < 8; ++c) {
        std::vector<double> prop(n), count(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& it = result.iterations[i];
            prop[i] = pooled ? it.category_proportion[c] : it.category_proportion_mean[c];
            count[i] = static_cast<double>(it.category_counts[c]);
        }
        result.category_proportion[c] = summarize(std::move(prop), config.ci_level);
        result.category_count[c] = summarize(std::move(count), config.ci_level);
    }
    return result;
}

std::vector<StratumEvidence> ablate_evidence(std::span<const StratumEvidence> strata, double fraction,
                                             std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("ablation fraction must be in (0, 1]");
    std::vector<StratumEvidence> out(strata.begin(), strata.end());
    if (fraction == 1.0) return out;
    for (auto& ev : out) {
        auto& items = ev.annotated_flagged;
        const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(items.size())));
        if (keep == 0) throw std::invalid_argument("ablation leaves no annotations in stratum " + ev.stratum_id);
        Rng rng = Rng::stream(seed, {stable_hash("ablate"), stable_hash(ev.stratum_id)});
        for (std::size_t k = 0; k < keep; ++k) std::swap(items[k], items[k + rng.below(items.size() - k)]);
        items.resize(keep);
    }
    return out;
}

BootstrapResult ablate(BootstrapConfig config, std::span<const StratumEvidence> strata,
                       const FalseNegativePool& pool, double fraction) {
    config.ablation_fraction = fraction;
    return run(config, strata, pool);
}

std::array<ModerationRate, 8> moderation_rate_by_category(std::span<const CategoryCounts> online_counts,
                                                          std::span<const AnnotatedComment> moderated_sample,
                                                          std::int64_t population_moderated_total,
                                                          std::uint64_t seed, double ci_level) {
    if (online_counts.empty()) throw std::invalid_argument("no online category counts");
    if (moderated_sample.empty()) throw std::invalid_argument("moderated sample is empty");
    if (population_moderated_total < 0) throw std::invalid_argument("moderated population must be >= 0");
    const double m = static_cast<double>(moderated_sample.size());
    std::array<std::vector<double>, 8> rates;
    std::array<ModerationRate, 8> out;
    for (std::size_t i = 0; i < online_counts.size(); ++i) {
        Rng rng = Rng::stream(seed, {stable_hash("moderated"), i});
        CategoryCounts counts{};
        for (std::size_t k = 0; k < moderated_sample.size(); ++k) {
            const auto& item = moderated_sample[rng.below(moderated_sample.size())];
            if (item.violating) add_categories(counts, item.categories, 1);
        }
        for (std::size_t c = 0; c < 8; ++c) {
            const double mc = static_cast<double>(population_moderated_total) * (static_cast<double>(counts[c]) / m);
            const double denom = mc + static_cast<double>(online_counts[i][c]);
            if (denom == 0.0) {
                ++out[c].excluded_iterations;
                continue;
            }
            rates[c].push_back(mc / denom);
        }
    }
    for (std::size_t c = 0; c < 8; ++c) {
        if (rates[c].empty()) continue;
        out[c].estimate = summarize(std::move(rates[c]), ci_level);
        out[c].defined = true;
    }
    return out;
}

PermutationResult permutation_test(std::span<const PeriodRate> a, std::span<const PeriodRate> b, int n_perm,
                                   std::uint64_t seed) {
    if (n_perm < 1) throw std::invalid_argument("n_perm must be at least 1");
    if (a.empty() || b.empty()) throw std::invalid_argument("permutation test needs rates for both periods");
    std::unordered_map<std::string, const PeriodRate*> by_id;
    for (const auto& r : b) by_id[r.stratum_id] = &r;
    std::vector<std::pair<PeriodRate, PeriodRate>> pairs;
    for (const auto& r : a) {
        auto it = by_id.find(r.stratum_id);
        if (it != by_id.end()) pairs.emplace_back(r, *it->second);
    }
    if (pairs.empty()) throw std::invalid_argument("no stratum appears in both periods");

    std::vector<char> swapped(pairs.size(), 0);
    auto statistic = [&] {
        double wa = 0.0, sa = 0.0, wb = 0.0, sb = 0.0;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto& x = swapped[k] ? pairs[k].second : pairs[k].first;
            const auto& y = swapped[k] ? pairs[k].first : pairs[k].second;
            wa += static_cast<double>(x.population);
            sa += x.rate * static_cast<double>(x.population);
            wb += static_cast<double>(y.population);
            sb += y.rate * static_cast<double>(y.population);
        }
        if (wa <= 0.0 || wb <= 0.0) throw std::invalid_argument("paired populations must be positive");
        return sa / wa - sb / wb;
    };

    PermutationResult out;
    out.pairs = pairs.size();
    out.statistic = statistic();
    const double observed = std::abs(out.statistic);
    const double tolerance = 1e-12 * std::max(1.0, observed);
    Rng rng = Rng::stream(seed, {stable_hash("permute")});
    int extreme = 0;
    for (int p = 0; p < n_perm; ++p) {
        for (auto& s : swapped) s = static_cast<char>(rng.next() >> 63);
        if (std::abs(statistic()) >= observed - tolerance) ++extreme;
    }
    out.p_value = (1.0 + extreme) / (n_perm + 1.0);
    return out;
}

EvidenceSet load_evidence(const std::filesystem::path& dir) {
    const CsvTable sample = read_csv(dir / "sample.csv");
    const auto c_id = sample.column("stratum_id");
    const auto c_pop = sample.column("population_online");
    const auto c_mod = sample.column("population_moderated");
    const auto c_n = sample.column("sample_size");
    const auto c_k = sample.column("flagged");

    const auto flagged = read_annotations(dir / "flagged.csv");
    const auto unflagged = read_annotations(dir / "unflagged.csv");
    std::set<std::string> known;
    EvidenceSet out;
    for (std::size_t r = 0; r < sample.rows.size(); ++r) {
        const auto& row = sample.rows[r];
        const std::string where = "sample.csv line " + std::to_string(r + 2);
        StratumEvidence ev;
        try {
            ev.stratum_id = row.at(c_id);
            ev.population_online = parse_int(row.at(c_pop));
            ev.population_moderated = parse_int(row.at(c_mod));
            ev.sample_size = parse_int(row.at(c_n));
            ev.sample_flagged = parse_int(row.at(c_k));
        } catch (const std::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
        if (ev.stratum_id.empty() || !known.insert(ev.stratum_id).second)
            throw std::runtime_error(where + ": empty or duplicate stratum_id");
        if (ev.population_online < 0 || ev.population_moderated < 0 || ev.sample_size < 0 || ev.sample_flagged < 0 ||
            ev.sample_flagged > ev.sample_size)
            throw std::runtime_error(where + ": counts out of range");
        ev.annotated_flagged = group_stratum(flagged, ev.stratum_id);
        out.strata.push_back(std::move(ev));
    }
    for (const auto& a : flagged) {
        if (!a.flagged) throw std::runtime_error("flagged.csv: " + a.comment_id + " is not flagged");
        if (!known.count(a.stratum_id))
            throw std::runtime_error("flagged.csv: unknown stratum " + a.stratum_id + " for " + a.comment_id);
    }
    for (const auto& a : unflagged)
        if (a.flagged) throw std::runtime_error("unflagged.csv: " + a.comment_id + " is flagged");
    out.pool.items = unflagged;
    if (std::filesystem::exists(dir / "moderated.csv")) {
        out.moderated = read_annotations(dir / "moderated.csv");
        out.has_moderated = true;
    }
    return out;
}

}  // namespace normwatch
