#pragma once

// Comment corpora: ingestion, tokenization, study sampling and balanced
// training splits. File layouts are described in docs/SCHEMA.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace normwatch {

enum class ModerationStatus { online, moderated, author_deleted, bot };

std::string_view to_string(ModerationStatus status);
std::optional<ModerationStatus> parse_moderation_status(std::string_view text);

struct Comment {
    std::string id;
    std::string stratum_id;
    std::string body;
    std::int64_t created_at = 0;
    std::int64_t score = 0;
    std::int64_t top_level_replies = 0;
    ModerationStatus moderation_status = ModerationStatus::online;
    std::string period;
};

struct Stratum {
    std::string stratum_id;
    std::string display_name;
    std::string topic_category;
    std::int64_t moderator_count = 0;
    std::int64_t population_online = 0;
    std::int64_t population_moderated = 0;
    std::string period;
};

struct StratumCounts {
    std::int64_t online = 0;
    std::int64_t moderated = 0;
    std::int64_t author_deleted = 0;
    std::int64_t bot = 0;
    std::int64_t total() const { return online + moderated + author_deleted + bot; }
};

struct Corpus {
    std::vector<Comment> comments;
    std::vector<Stratum> strata;
    std::map<std::string, StratumCounts> counts;

    const Comment* find(std::string_view id) const;
    std::vector<std::string> stratum_ids() const;

    std::unordered_map<std::string, std::size_t> index;
};

// Parses one corpus line. Throws std::invalid_argument on any schema mismatch.
Comment parse_comment(std::string_view line);
Stratum parse_stratum(std::string_view line);

// Canonical single-line encodings (fixed key order, no trailing newline).
std::string serialize(const Comment& comment);
std::string serialize(const Stratum& stratum);

std::vector<Stratum> load_strata(const std::filesystem::path& path);

// Every comment must carry `period`. When `strata` is non-empty, each comment's
// stratum must be declared there and per-stratum counts may not exceed the
// declared populations for the same period. Bot comments are kept; callers
// filter them through the status field.
Corpus load_corpus(const std::filesystem::path& path, std::string_view period,
                   std::span<const Stratum> strata = {});

void write_corpus(const std::filesystem::path& path, std::span<const Comment> comments);
void write_strata(const std::filesystem::path& path, std::span<const Stratum> strata);

struct TokenSequence {
    std::vector<std::string> tokens;
    bool operator==(const TokenSequence&) const = default;
};

struct PreprocessOptions {
    // When false, bytes >= 0x80 (UTF-8 continuation and lead bytes) count as
    // letters and are kept unchanged; ASCII letters are still lowercased.
    bool ascii_only = true;
};

TokenSequence preprocess(std::string_view body, const PreprocessOptions& options = {});
std::string join(const TokenSequence& tokens);

// Up to `per_stratum` online comments per stratum, without replacement.
// Output is grouped by stratum id (sorted) and keeps file order inside a stratum.
std::vector<Comment> sample_study_set(const Corpus& corpus, std::int64_t per_stratum,
                                      std::uint64_t seed);

struct LabeledText {
    std::string comment_id;
    TokenSequence tokens;
    bool moderated = false;
};

struct BalancedSplits {
    std::vector<LabeledText> train;
    std::vector<LabeledText> validation;
    std::vector<LabeledText> test;
};

// Balanced moderated/online 70/15/15 split for one stratum. The majority class
// is downsampled to the minority size first.
BalancedSplits build_balanced_training_set(const Corpus& corpus, std::string_view stratum_id,
                                           std::uint64_t seed,
                                           const PreprocessOptions& options = {});

}  // namespace normwatch
