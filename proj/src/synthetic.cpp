#include "normwatch/synthetic.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <algorithm>

namespace normwatch {

namespace {

CategorySet draw_category(const std::array<double, 8>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform() * total;
    for (std::size_t c = 0; c < 8; ++c) {
        if (u < weights[c]) return CategorySet{kNormCategories[c]};
        u -= weights[c];
    }
    for (std::size_t c = 8; c-- > 0;)
        if (weights[c] > 0) return CategorySet{kNormCategories[c]};
    throw std::invalid_argument("category weights must not all be zero");
}

AnnotatedComment draw_item(const std::string& id, const std::string& stratum, bool flagged, double p,
                           const std::array<double, 8>& weights, Rng& rng) {
    AnnotatedComment a;
    a.comment_id = id;
    a.stratum_id = stratum;
    a.flagged = flagged;
    a.n_raters = kRatersPerComment;
    a.violating = rng.bernoulli(p);
    if (a.violating) a.categories = draw_category(weights, rng);
    return a;
}

}  // namespace

double expected_prevalence(const SyntheticEvidenceParams& p) {
    return p.flag_rate * p.p_tp + (1.0 - p.flag_rate) * p.p_fn;
}

EvidenceSet synthesize_evidence(const SyntheticEvidenceParams& params, std::uint64_t seed) {
    if (params.strata < 1 || params.sample_size < 1 || params.annotated < 0 || params.pool_size < 1)
        throw std::invalid_argument("invalid synthetic evidence parameters");
    EvidenceSet out;
    for (int s = 0; s < params.strata; ++s) {
        StratumEvidence ev;
        ev.stratum_id = "s" + std::to_string(s);
        Rng rng = Rng::stream(seed, {stable_hash("synthetic"), stable_hash(ev.stratum_id)});
        ev.population_online = params.population;
        ev.population_moderated = params.population_moderated;
        ev.sample_size = params.sample_size;
        ev.sample_flagged = rng.binomial(params.sample_size, params.flag_rate);
        for (int k = 0; k < params.annotated; ++k)
            ev.annotated_flagged.push_back(draw_item(ev.stratum_id + "-f" + std::to_string(k), ev.stratum_id, true,
                                                     params.p_tp, params.category_weights, rng));
        out.strata.push_back(std::move(ev));
    }
    Rng rng = Rng::stream(seed, {stable_hash("synthetic"), stable_hash("fn-pool")});
    for (int k = 0; k < params.pool_size; ++k) {
        const std::string stratum = "s" + std::to_string(k % params.strata);
        out.pool.items.push_back(
            draw_item("u" + std::to_string(k), stratum, false, params.p_fn, params.category_weights, rng));
    }
    return out;
}

std::vector<RegressionRow> synthesize_regression_rows(const SyntheticRegressionParams& params, std::uint64_t seed) {
    static const std::array<const char*, 4> topics{"general content", "NSFW", "hobbies and occupations", "humor"};
    Rng rng = Rng::stream(seed, {stable_hash("regression")});
    std::vector<RegressionRow> rows;
    for (int s = 0; s < params.strata; ++s) {
        RegressionRow r;
        r.stratum_id = "r" + std::to_string(s);
        r.topic = topics[static_cast<std::size_t>(s) % topics.size()];
        r.total_comments = static_cast<std::int64_t>(std::llround(std::exp(std::log(1e4) + rng.uniform() * std::log(100.0))));
        const double target = -5.5 + 2.0 * rng.uniform();
        r.moderator_count = std::max<std::int64_t>(1, std::llround(static_cast<double>(r.total_comments) * std::exp(target)));
        const double lr = std::log(static_cast<double>(r.moderator_count) / static_cast<double>(r.total_comments));
        double eta = params.intercept + params.log_ratio * lr;
        if (r.topic == std::string("NSFW")) eta += params.nsfw;
        if (r.topic == std::string("hobbies and occupations")) eta += params.hobbies;
        r.violating = static_cast<double>(rng.binomial(r.total_comments, std::min(1.0, std::exp(eta))));
        rows.push_back(r);
    }
    return rows;
}

}  // namespace normwatch
