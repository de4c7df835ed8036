#include "normwatch/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "normwatch/rng.hpp"

namespace normwatch {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kCommentKeys[] = {"id",    "stratum_id",        "body",
                                             "created_at", "score", "top_level_replies",
                                             "moderation_status", "period"};
constexpr std::string_view kStratumKeys[] = {"stratum_id",        "display_name",
                                             "topic_category",    "moderator_count",
                                             "population_online", "population_moderated",
                                             "period"};

template <std::size_t N>
void require_exact_keys(const nlohmann::json& obj, const std::string_view (&keys)[N]) {
    if (!obj.is_object()) throw std::invalid_argument("record is not an object");
    for (auto key : keys) {
        if (!obj.contains(std::string(key)))
            throw std::invalid_argument("missing field '" + std::string(key) + "'");
    }
    if (obj.size() != N) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (std::find(std::begin(keys), std::end(keys), it.key()) == std::end(keys))
                throw std::invalid_argument("unexpected field '" + it.key() + "'");
        }
    }
}

std::string get_string(const nlohmann::json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

std::int64_t get_int(const nlohmann::json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer())
        throw std::invalid_argument(std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
}

std::int64_t get_count(const nlohmann::json& obj, const char* key) {
    auto value = get_int(obj, key);
    if (value < 0) throw std::invalid_argument(std::string("field '") + key + "' must be >= 0");
    return value;
}

bool is_letter(unsigned char c, const PreprocessOptions& options) {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return true;
    return !options.ascii_only && c >= 0x80;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        fn(line, line_no);
    }
}

}  // namespace

std::string_view to_string(ModerationStatus status) {
    switch (status) {
        case ModerationStatus::online: return "online";
        case ModerationStatus::moderated: return "moderated";
        case ModerationStatus::author_deleted: return "author_deleted";
        case ModerationStatus::bot: return "bot";
    }
    return "online";
}

std::optional<ModerationStatus> parse_moderation_status(std::string_view text) {
    if (text == "online") return ModerationStatus::online;
    if (text == "moderated") return ModerationStatus::moderated;
    if (text == "author_deleted") return ModerationStatus::author_deleted;
    if (text == "bot") return ModerationStatus::bot;
    return std::nullopt;
}

const Comment* Corpus::find(std::string_view id) const {
    auto it = index.find(std::string(id));
    return it == index.end() ? nullptr : &comments[it->second];
}

std::vector<std::string> Corpus::stratum_ids() const {
    std::vector<std::string> ids;
    ids.reserve(counts.size());
    for (const auto& [id, _] : counts) ids.push_back(id);
    return ids;
}

Comment parse_comment(std::string_view line) {
    const auto obj = nlohmann::json::parse(line);
    require_exact_keys(obj, kCommentKeys);
    Comment c;
    c.id = get_string(obj, "id");
    if (c.id.empty()) throw std::invalid_argument("field 'id' must be non-empty");
    c.stratum_id = get_string(obj, "stratum_id");
    c.body = get_string(obj, "body");
    c.created_at = get_int(obj, "created_at");
    c.score = get_int(obj, "score");
    c.top_level_replies = get_count(obj, "top_level_replies");
    const auto status = get_string(obj, "moderation_status");
    auto parsed = parse_moderation_status(status);
    if (!parsed) throw std::invalid_argument("unknown moderation_status '" + status + "'");
    c.moderation_status = *parsed;
    c.period = get_string(obj, "period");
    return c;
}

Stratum parse_stratum(std::string_view line) {
    const auto obj = nlohmann::json::parse(line);
    require_exact_keys(obj, kStratumKeys);
    Stratum s;
    s.stratum_id = get_string(obj, "stratum_id");
    if (s.stratum_id.empty()) throw std::invalid_argument("field 'stratum_id' must be non-empty");
    s.display_name = get_string(obj, "display_name");
    s.topic_category = get_string(obj, "topic_category");
    s.moderator_count = get_count(obj, "moderator_count");
    s.population_online = get_count(obj, "population_online");
    s.population_moderated = get_count(obj, "population_moderated");
    s.period = get_string(obj, "period");
    return s;
}

std::string serialize(const Comment& c) {
    ordered_json obj;
    obj["id"] = c.id;
    obj["stratum_id"] = c.stratum_id;
    obj["body"] = c.body;
    obj["created_at"] = c.created_at;
    obj["score"] = c.score;
    obj["top_level_replies"] = c.top_level_replies;
    obj["moderation_status"] = std::string(to_string(c.moderation_status));
    obj["period"] = c.period;
    return obj.dump();
}

std::string serialize(const Stratum& s) {
    ordered_json obj;
    obj["stratum_id"] = s.stratum_id;
    obj["display_name"] = s.display_name;
    obj["topic_category"] = s.topic_category;
    obj["moderator_count"] = s.moderator_count;
    obj["population_online"] = s.population_online;
    obj["population_moderated"] = s.population_moderated;
    obj["period"] = s.period;
    return obj.dump();
}

std::vector<Stratum> load_strata(const std::filesystem::path& path) {
    std::vector<Stratum> strata;
    std::set<std::pair<std::string, std::string>> seen;
    for_each_line(path, [&](const std::string& line, std::size_t line_no) {
        Stratum s;
        try {
            s = parse_stratum(line);
        } catch (const std::exception& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) +
                                        ": malformed stratum record: " + e.what());
        }
        if (!seen.emplace(s.stratum_id, s.period).second)
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) +
                                        ": duplicate stratum '" + s.stratum_id + "' for period '" +
                                        s.period + "'");
        strata.push_back(std::move(s));
    });
    return strata;
}

Corpus load_corpus(const std::filesystem::path& path, std::string_view period,
                   std::span<const Stratum> strata) {
    Corpus corpus;
    std::set<std::string> declared;
    for (const auto& s : strata) declared.insert(s.stratum_id);

    for_each_line(path, [&](const std::string& line, std::size_t line_no) {
        const auto where = path.string() + ":" + std::to_string(line_no);
        Comment c;
        try {
            c = parse_comment(line);
        } catch (const std::exception& e) {
            throw std::invalid_argument(where + ": malformed record: " + e.what());
        }
        if (c.period != period)
            throw std::invalid_argument(where + ": period '" + c.period + "' does not match expected '" +
                                        std::string(period) + "'");
        if (!declared.empty() && !declared.count(c.stratum_id))
            throw std::invalid_argument(where + ": unknown stratum_id '" + c.stratum_id + "'");
        if (!corpus.index.emplace(c.id, corpus.comments.size()).second)
            throw std::invalid_argument(where + ": duplicate comment id '" + c.id + "'");
        auto& counts = corpus.counts[c.stratum_id];
        switch (c.moderation_status) {
            case ModerationStatus::online: ++counts.online; break;
            case ModerationStatus::moderated: ++counts.moderated; break;
            case ModerationStatus::author_deleted: ++counts.author_deleted; break;
            case ModerationStatus::bot: ++counts.bot; break;
        }
        corpus.comments.push_back(std::move(c));
    });

    for (const auto& s : strata) {
        if (s.period != period) continue;
        auto it = corpus.counts.find(s.stratum_id);
        if (it == corpus.counts.end()) continue;
        if (it->second.online > s.population_online)
            throw std::invalid_argument("stratum '" + s.stratum_id + "': corpus holds " +
                                        std::to_string(it->second.online) +
                                        " online comments but population_online is " +
                                        std::to_string(s.population_online));
        if (it->second.moderated > s.population_moderated)
            throw std::invalid_argument("stratum '" + s.stratum_id + "': corpus holds " +
                                        std::to_string(it->second.moderated) +
                                        " moderated comments but population_moderated is " +
                                        std::to_string(s.population_moderated));
    }
    corpus.strata.assign(strata.begin(), strata.end());
    return corpus;
}

void write_corpus(const std::filesystem::path& path, std::span<const Comment> comments) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& c : comments) out << serialize(c) << '\n';
}

void write_strata(const std::filesystem::path& path, std::span<const Stratum> strata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& s : strata) out << serialize(s) << '\n';
}

TokenSequence preprocess(std::string_view body, const PreprocessOptions& options) {
    TokenSequence out;
    std::string current;
    for (char ch : body) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_letter(c, options)) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!current.empty()) {
            out.tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.tokens.push_back(std::move(current));
    return out;
}

std::string join(const TokenSequence& tokens) {
    std::string out;
    for (const auto& t : tokens.tokens) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

std::vector<Comment> sample_study_set(const Corpus& corpus, std::int64_t per_stratum,
                                      std::uint64_t seed) {
    if (per_stratum <= 0) throw std::invalid_argument("sample_study_set: per_stratum must be positive");
    std::map<std::string, std::vector<std::size_t>> online;
    for (std::size_t i = 0; i < corpus.comments.size(); ++i) {
        const auto& c = corpus.comments[i];
        if (c.moderation_status == ModerationStatus::online) online[c.stratum_id].push_back(i);
    }
    std::vector<Comment> sample;
    for (auto& [stratum_id, pool] : online) {
        const auto take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(per_stratum));
        if (take < pool.size()) {
            auto rng = Rng::stream(seed, {stable_hash("study"), stable_hash(stratum_id)});
            for (std::size_t i = 0; i < take; ++i) {
                const auto j = i + rng.below(pool.size() - i);
                std::swap(pool[i], pool[j]);
            }
            pool.resize(take);
            std::sort(pool.begin(), pool.end());
        }
        for (auto idx : pool) sample.push_back(corpus.comments[idx]);
    }
    return sample;
}

BalancedSplits build_balanced_training_set(const Corpus& corpus, std::string_view stratum_id,
                                           std::uint64_t seed, const PreprocessOptions& options) {
    std::vector<std::size_t> moderated;
    std::vector<std::size_t> online;
    for (std::size_t i = 0; i < corpus.comments.size(); ++i) {
        const auto& c = corpus.comments[i];
        if (c.stratum_id != stratum_id) continue;
        if (c.moderation_status == ModerationStatus::moderated) moderated.push_back(i);
        if (c.moderation_status == ModerationStatus::online) online.push_back(i);
    }
    const std::string sid(stratum_id);
    if (moderated.empty())
        throw std::invalid_argument("stratum '" + sid + "' has no moderated comments");
    if (online.empty())
        throw std::invalid_argument("stratum '" + sid + "' has no online comments");

    auto rng = Rng::stream(seed, {stable_hash("balanced"), stable_hash(stratum_id)});
    auto shuffle = [&rng](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    };
    shuffle(moderated);
    shuffle(online);
    const std::size_t per_class = std::min(moderated.size(), online.size());
    moderated.resize(per_class);
    online.resize(per_class);

    const std::size_t n_train = per_class * 7 / 10;
    const std::size_t n_val = (per_class - n_train) / 2;

    auto label = [&](std::size_t idx) {
        const auto& c = corpus.comments[idx];
        return LabeledText{c.id, preprocess(c.body, options),
                           c.moderation_status == ModerationStatus::moderated};
    };
    BalancedSplits splits;
    auto fill = [&](std::vector<LabeledText>& dst, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            dst.push_back(label(moderated[i]));
            dst.push_back(label(online[i]));
        }
    };
    fill(splits.train, 0, n_train);
    fill(splits.validation, n_train, n_train + n_val);
    fill(splits.test, n_train + n_val, per_class);
    return splits;
}

}  // namespace normwatch
