#include "normwatch/desk.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "normwatch/rng.hpp"
#include "normwatch/textio.hpp"

namespace normwatch {

namespace {

using json = nlohmann::json;

constexpr const char* kNeutral[] = {
    "the",     "a",       "and",    "of",      "to",      "in",      "is",       "it",      "that",   "this",
    "was",     "for",     "on",     "with",    "as",      "at",      "by",       "from",    "about",  "just",
    "game",    "team",    "season", "player",  "build",   "recipe",  "garden",   "photo",   "camera", "trip",
    "city",    "music",   "album",  "song",    "movie",   "book",    "chapter",  "story",   "post",   "thread",
    "comment", "update",  "week",   "year",    "today",   "morning", "evening",  "weekend", "friend", "family",
    "work",    "office",  "project", "code",   "bug",     "release", "version",  "review",  "price",  "store",
    "coffee",  "dinner",  "bike",   "car",     "train",   "weather", "rain",     "summer",  "winter", "river",
    "really",  "pretty",  "good",   "great",   "nice",    "fine",    "okay",     "love",    "think",  "agree",
    "thanks",  "interesting", "funny", "helpful", "original", "picture", "question", "answer", "idea",
    "problem", "solution", "detail", "minute", "hour",    "people"};

// Marker words per norm, in NormCategory order.
constexpr std::array<std::array<const char*, 6>, 8> kMarkers{{
    {"crass", "lewd", "sexist", "crude", "filthy", "vulgar"},
    {"traitors", "propaganda", "regime", "sheeple", "treason", "shill"},
    {"inferior", "vermin", "invaders", "degenerate", "parasites", "outsiders"},
    {"censorship", "shadowban", "sellout", "greedy", "corporate", "admins"},
    {"nsfw", "xxx", "camgirl", "onlyfans", "hotpics", "clickhere"},
    {"idiot", "moron", "loser", "pathetic", "clown", "imbecile"},
    {"mods", "powertrip", "janitors", "tyrants", "modabuse", "banhappy"},
    {"snowflake", "triggered", "crybaby", "oversensitive", "offended", "softies"},
}};

struct StratumDef {
    const char* id;
    const char* name;
    const char* topic;
    std::int64_t moderators;
    std::int64_t online;
    std::int64_t moderated;
    double topic_scale;
};

constexpr std::array<StratumDef, 5> kStrata{{
    {"s0", "askanything", "general content", 14, 1'400'000, 96'000, 1.0},
    {"s1", "dailychat", "general content", 5, 420'000, 31'000, 1.1},
    {"s2", "afterdark", "NSFW", 11, 2'300'000, 180'000, 1.8},
    {"s3", "woodworking", "hobbies and occupations", 6, 160'000, 6'500, 0.5},
    {"s4", "punchlines", "humor", 9, 780'000, 52'000, 1.0},
}};

// Category mix of violating comments.
constexpr std::array<double, 8> kOnlineWeights{2.0, 1.5, 0.8, 0.6, 0.4, 3.0, 0.5, 0.7};
constexpr std::array<double, 8> kModeratedWeights{2.0, 1.0, 1.5, 0.5, 3.0, 2.5, 0.8, 0.4};

constexpr std::array<std::int64_t, 2> kPeriodStart{1'451'606'400, 1'577'836'800};

std::size_t pick(const std::array<double, 8>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform() * total;
    for (std::size_t c = 0; c < weights.size(); ++c) {
        if (u < weights[c]) return c;
        u -= weights[c];
    }
    return weights.size() - 1;
}

CategorySet draw_categories(std::array<double, 8> weights, Rng& rng) {
    CategorySet set{kNormCategories[pick(weights, rng)]};
    if (rng.bernoulli(0.15)) set.insert(kNormCategories[pick(weights, rng)]);
    return set;
}

double normal(Rng& rng) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string body_for(CategorySet categories, Rng& rng) {
    std::vector<std::string> words;
    const auto n = 8 + static_cast<int>(rng.below(17));
    for (int i = 0; i < n; ++i) words.emplace_back(kNeutral[rng.below(std::size(kNeutral))]);
    for (auto c : categories.members()) {
        const auto& markers = kMarkers[static_cast<std::size_t>(c)];
        for (int k = 0; k < 2; ++k) {
            const auto at = rng.below(words.size() + 1);
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), markers[rng.below(markers.size())]);
        }
    }
    std::string out;
    std::size_t sentence = 0;
    auto length = 4 + rng.below(7);
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::string w = words[i];
        if (sentence == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        if (!out.empty()) out.push_back(' ');
        out += w;
        if (++sentence == length || i + 1 == words.size()) {
            out.push_back(categories.empty() ? '.' : (rng.bernoulli(0.5) ? '!' : '.'));
            sentence = 0;
            length = 4 + rng.below(7);
        }
    }
    return out;
}

std::string explain(CategorySet categories) {
    if (categories.empty()) return "No norm is violated: the comment stays on topic without hostility.";
    std::string out = "Violates ";
    const auto members = categories.members();
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (i) out += " and ";
        out += to_string(members[i]);
    }
    return out + ": " + std::string(norm_definition(members.front()));
}

}  // namespace

DeskFixture make_desk_fixture(const DeskFixtureParams& params, std::uint64_t seed) {
    if (params.periods.empty() || params.base_rate.size() != params.periods.size() ||
        params.periods.size() > kPeriodStart.size())
        throw std::invalid_argument("desk fixture needs one base rate per period (at most two periods)");
    if (params.comments_per_stratum < 1) throw std::invalid_argument("comments_per_stratum must be positive");
    DeskFixture out;
    for (std::size_t p = 0; p < params.periods.size(); ++p) {
        const auto& period = params.periods[p];
        auto& comments = out.corpus[period];
        for (const auto& def : kStrata) {
            out.strata.push_back({def.id, def.name, def.topic, def.moderators, def.online, def.moderated, period});
            Rng rng = Rng::stream(seed, {stable_hash("desk"), stable_hash(period), stable_hash(def.id)});
            const double online_rate = params.base_rate[p] * def.topic_scale;
            auto weights = kOnlineWeights;
            auto moderated_weights = kModeratedWeights;
            if (std::string_view(def.topic) == "NSFW") {
                weights[4] *= 3.0;
                moderated_weights[4] *= 3.0;
            }
            for (int i = 0; i < params.comments_per_stratum; ++i) {
                Comment c;
                char id[48];
                std::snprintf(id, sizeof id, "%s_%s_%04d", period.c_str(), def.id, i);
                c.id = id;
                c.stratum_id = def.id;
                c.period = period;
                c.created_at = kPeriodStart[p] + static_cast<std::int64_t>(rng.below(365 * 86400));
                const double u = rng.uniform();
                c.moderation_status = u < params.moderated_share ? ModerationStatus::moderated
                                      : u < params.moderated_share + 0.02 ? ModerationStatus::author_deleted
                                      : u < params.moderated_share + 0.03 ? ModerationStatus::bot
                                                                          : ModerationStatus::online;
                const bool moderated = c.moderation_status == ModerationStatus::moderated;
                CategorySet labels;
                if (rng.bernoulli(moderated ? params.moderated_violation_rate : online_rate))
                    labels = draw_categories(moderated ? moderated_weights : weights, rng);
                c.body = body_for(labels, rng);
                const double mean = labels.empty() ? 6.0 : 6.0 - params.score_gap;
                c.score = static_cast<std::int64_t>(std::lround(mean + 4.0 * normal(rng)));
                c.top_level_replies = rng.binomial(12, labels.empty() ? 0.2 : 0.15);
                out.truth[c.id] = labels;
                comments.push_back(std::move(c));
            }
        }
    }

    Rng rng = Rng::stream(seed, {stable_hash("desk"), stable_hash("gold")});
    for (std::size_t c = 0; c < kNormCategories.size(); ++c) {
        for (int k = 0; k < 2; ++k) {
            const CategorySet set{kNormCategories[c]};
            out.gold.intro.push_back({"intro_" + std::to_string(2 * c + k), body_for(set, rng), set, explain(set)});
        }
    }
    for (int i = 0; i < kTrainingItems; ++i) {
        CategorySet set;
        if (i % 3 != 0) {
            set.insert(kNormCategories[static_cast<std::size_t>(i) % kNormCategories.size()]);
            if (i % 7 == 2) set.insert(kNormCategories[static_cast<std::size_t>(i + 3) % kNormCategories.size()]);
        }
        out.gold.training.push_back({"train_" + std::to_string(i), body_for(set, rng), set, explain(set)});
    }

    std::string lexicon = "# word,score (illustrative emotionality scores for the desk fixture)\n";
    for (std::size_t c = 0; c < kMarkers.size(); ++c)
        for (std::size_t k = 0; k < kMarkers[c].size(); ++k)
            lexicon += std::string(kMarkers[c][k]) + "," + format_fixed(5.5 + 0.5 * static_cast<double>((c + k) % 6), 2) + "\n";
    for (const char* w : {"good", "great", "nice", "love", "funny", "interesting", "helpful", "thanks"})
        lexicon += std::string(w) + "," + format_fixed(1.0 + 0.5 * static_cast<double>(std::string_view(w).size() % 5), 2) + "\n";
    for (const char* w : {"fine", "okay", "pretty", "agree", "think", "really"})
        lexicon += std::string(w) + ",0.50\n";
    out.lexicon = std::move(lexicon);
    return out;
}

void write_desk_fixture(const std::filesystem::path& dir, const DeskFixture& fixture, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    write_strata(dir / "strata.jsonl", fixture.strata);
    json corpus_paths = json::object();
    json periods = json::array();
    for (const auto& [period, comments] : fixture.corpus) {
        const std::string name = "corpus_" + period + ".jsonl";
        write_corpus(dir / name, comments);
        corpus_paths[period] = name;
        periods.push_back(period);
    }
    std::string truth = "comment_id,categories\n";
    for (const auto& [id, labels] : fixture.truth) truth += id + "," + to_string(labels) + "\n";
    write_file(dir / "truth.csv", truth);
    std::string gold_lines;
    auto add = [&](const GoldExample& g, const char* role) {
        json cats = json::array();
        for (auto c : g.categories.members()) cats.push_back(std::string(to_string(c)));
        gold_lines += json{{"id", g.id}, {"role", role}, {"body", g.body}, {"categories", cats},
                           {"explanation", g.explanation}}
                          .dump() +
                      "\n";
    };
    for (const auto& g : fixture.gold.intro) add(g, "intro");
    for (const auto& g : fixture.gold.training) add(g, "training");
    write_file(dir / "gold.jsonl", gold_lines);
    write_file(dir / "lexicon.csv", fixture.lexicon);

    json config{
        {"seed", seed},
        {"periods", periods},
        {"train_period", periods.front()},
        {"paths",
         {{"corpus", corpus_paths},
          {"strata", "strata.jsonl"},
          {"gold", "gold.jsonl"},
          {"truth", "truth.csv"},
          {"lexicon", "lexicon.csv"},
          {"output", "out"}}},
        {"train",
         {{"grid", false},
          {"hyperparams",
           {{"vocab_size", 2000},
            {"max_len", 64},
            {"epochs", 30},
            {"relu_nodes", 16},
            {"embedding_dim", 16},
            {"learning_rate", 0.01},
            {"batch_size", 32}}}}},
        {"flag", {{"threshold", 3}, {"study_sample", 500}}},
        {"campaign",
         {{"annotated_per_stratum", 8},
          {"pool_size", 200},
          {"moderated_sample", 40},
          {"annotator_accuracy", 0.9},
          {"annotators_per_wave", 5}}},
        {"estimate", {{"iterations", 200}, {"ci_level", 0.95}, {"ablate", 0.5}, {"samples", false}}},
        {"compare", {{"permutations", 10000}}},
    };
    write_file(dir / "desk.json", config.dump(2) + "\n");
}

std::map<std::string, CategorySet> load_truth(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const auto c_id = table.column("comment_id");
    const auto c_cat = table.column("categories");
    std::map<std::string, CategorySet> out;
    for (const auto& row : table.rows) {
        // A trailing empty field is dropped by some writers.
        const std::string cats = c_cat < row.size() ? row[c_cat] : std::string();
        if (!out.emplace(row.at(c_id), parse_category_set(cats)).second)
            throw std::invalid_argument(path.string() + ": duplicate comment id " + row.at(c_id));
    }
    return out;
}

}  // namespace normwatch
