#pragma once

// Annotation campaigns: norm categories, gated training with a reliability
// gate, three-rater task assignment, consensus and export.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "normwatch/rng.hpp"

namespace normwatch {

enum class NormCategory : std::uint8_t {
    misogyny_vulgarity,
    political_inflammatory,
    bigotry,
    attack_on_platform,
    pornographic_link,
    personal_attack,
    moderator_abuse,
    claiming_too_sensitive,
};

inline constexpr std::array<NormCategory, 8> kNormCategories{
    NormCategory::misogyny_vulgarity, NormCategory::political_inflammatory,
    NormCategory::bigotry,            NormCategory::attack_on_platform,
    NormCategory::pornographic_link,  NormCategory::personal_attack,
    NormCategory::moderator_abuse,    NormCategory::claiming_too_sensitive,
};

std::string_view to_string(NormCategory category);
std::optional<NormCategory> parse_norm_category(std::string_view text);
// Short definition shown to annotators.
std::string_view norm_definition(NormCategory category);

class CategorySet {
public:
    constexpr CategorySet() = default;
    CategorySet(std::initializer_list<NormCategory> categories) {
        for (auto c : categories) insert(c);
    }
    static constexpr CategorySet from_bits(std::uint8_t bits) {
        CategorySet s;
        s.bits_ = bits;
        return s;
    }

    void insert(NormCategory c) { bits_ |= bit(c); }
    void erase(NormCategory c) { bits_ &= static_cast<std::uint8_t>(~bit(c)); }
    void toggle(NormCategory c) { bits_ ^= bit(c); }
    bool contains(NormCategory c) const { return (bits_ & bit(c)) != 0; }
    bool empty() const { return bits_ == 0; }
    int size() const { return __builtin_popcount(bits_); }
    std::uint8_t bits() const { return bits_; }
    std::vector<NormCategory> members() const;

    friend CategorySet operator|(CategorySet a, CategorySet b) { return from_bits(a.bits_ | b.bits_); }
    friend CategorySet operator&(CategorySet a, CategorySet b) { return from_bits(a.bits_ & b.bits_); }
    bool operator==(const CategorySet&) const = default;

private:
    static constexpr std::uint8_t bit(NormCategory c) {
        return static_cast<std::uint8_t>(1u << static_cast<unsigned>(c));
    }
    std::uint8_t bits_ = 0;
};

// Members in declaration order joined by '|'; the empty set is "".
std::string to_string(CategorySet set);
CategorySet parse_category_set(std::string_view text);

// Cronbach's alpha for an items x raters matrix, sample variances (n-1).
// Throws std::domain_error when the row sums have zero variance.
template <typename Derived>
typename Derived::Scalar cronbach_alpha(const Eigen::MatrixBase<Derived>& ratings) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index items = ratings.rows();
    const Eigen::Index raters = ratings.cols();
    if (items < 2 || raters < 2)
        throw std::invalid_argument("cronbach_alpha needs at least 2 items and 2 raters");
    const Scalar denom = static_cast<Scalar>(items - 1);
    auto variance = [denom](const auto& v) { return (v.array() - v.mean()).square().sum() / denom; };
    Scalar rater_variance(0);
    for (Eigen::Index r = 0; r < raters; ++r) rater_variance += variance(ratings.col(r));
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> totals = ratings.rowwise().sum();
    const Scalar total_variance = variance(totals);
    if (total_variance == Scalar(0)) throw std::domain_error("cronbach_alpha undefined: total variance is zero");
    const Scalar k = static_cast<Scalar>(raters);
    return k / (k - Scalar(1)) * (Scalar(1) - rater_variance / total_variance);
}

inline constexpr double kQualificationAlpha = 0.7;
inline constexpr int kTrainingItems = 30;
inline constexpr int kTestItems = 10;  // the last ten training items are scored
inline constexpr int kRatersPerComment = 3;

inline bool passes_qualification(double alpha) { return alpha >= kQualificationAlpha; }

// Two-rater alpha between answers and gold over items x 8 binary cells.
// Returns -infinity when answers and gold are exact complements (row sums
// constant but the raters disagree everywhere).
double qualification_alpha(std::span<const CategorySet> answers, std::span<const CategorySet> gold);

enum class AnnotatorState { in_training, qualified, rejected };

std::string_view to_string(AnnotatorState state);

struct AnnotatorProfile {
    std::string annotator_id;
    AnnotatorState state = AnnotatorState::in_training;
    bool intro_done = false;
    int training_progress = 0;
    std::optional<double> alpha;
};

// Scores the ten test answers against gold and moves the profile out of
// training. Requires training_progress == 30.
AnnotatorProfile qualify(AnnotatorProfile profile, std::span<const CategorySet> test_answers,
                         std::span<const CategorySet> gold);

struct AnnotationRecord {
    std::string comment_id;
    std::string annotator_id;
    CategorySet categories;
    std::int64_t submitted_at = 0;
};

struct AnnotatedComment {
    std::string comment_id;
    std::string stratum_id;
    bool flagged = false;
    bool violating = false;
    CategorySet categories;
    int n_raters = 0;
    // Violating by majority but no category reached two votes.
    bool fallback = false;
};

// Majority over three records from distinct annotators.
AnnotatedComment consensus(std::span<const AnnotationRecord> records);

enum class TaskPool { flagged, unflagged, moderated };

std::string_view to_string(TaskPool pool);
std::optional<TaskPool> parse_task_pool(std::string_view text);

struct CampaignTask {
    std::string comment_id;
    std::string stratum_id;
    std::string body;
    TaskPool pool = TaskPool::flagged;
};

struct GoldExample {
    std::string id;
    std::string body;
    CategorySet categories;
    std::string explanation;
};

struct CampaignSpec {
    // Two single-category examples per norm, shown during the introduction.
    std::vector<GoldExample> intro;
    // Thirty ordered practice items; the last ten are the qualification test.
    std::vector<GoldExample> training;
    std::vector<CampaignTask> tasks;
};

// Throws std::invalid_argument describing the first violated rule.
void validate(const CampaignSpec& spec);

// Replaces spec.intro and spec.training with the rows of a gold file.
void load_gold(const std::filesystem::path& path, CampaignSpec& spec);

// Reads gold.jsonl and tasks.jsonl from a campaign directory.
CampaignSpec load_campaign(const std::filesystem::path& dir);
void write_campaign(const std::filesystem::path& dir, const CampaignSpec& spec);

class CampaignError : public std::runtime_error {
public:
    enum class Kind { not_found, forbidden, conflict, invalid };
    CampaignError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct CampaignOptions {
    std::int64_t lease_seconds = 30 * 60;
    std::uint64_t seed = 0;
};

struct TrainingFeedback {
    int item_index = 0;
    CategorySet gold;
    std::string explanation;
    AnnotatorProfile profile;
    bool duplicate = false;
};

struct SubmitOutcome {
    bool duplicate = false;
    bool comment_closed = false;
    int main_submissions = 0;
};

struct CampaignProgress {
    std::size_t tasks = 0;
    std::size_t closed = 0;
    std::size_t records = 0;
    std::size_t active_leases = 0;
    std::map<std::string, int> annotators_by_state;
};

// Thread-safe campaign store. Every mutation is validated, appended to the
// event log (when one is attached) and only then applied, so replaying the log
// rebuilds the same state. Times are caller-supplied epoch seconds.
class Campaign {
public:
    explicit Campaign(CampaignSpec spec, CampaignOptions options = {});
    // Replays an existing log, then appends new events to it.
    Campaign(CampaignSpec spec, CampaignOptions options, const std::filesystem::path& log);

    Campaign(const Campaign&) = delete;
    Campaign& operator=(const Campaign&) = delete;

    const CampaignSpec& spec() const { return spec_; }

    // New ids start in training; known ids resume.
    AnnotatorProfile register_annotator(const std::string& annotator_id, std::int64_t now);
    std::optional<AnnotatorProfile> profile(const std::string& annotator_id) const;
    AnnotatorProfile acknowledge_intro(const std::string& annotator_id, std::int64_t now);
    // item_index must equal the current progress; earlier items are answered
    // idempotently with their original feedback.
    TrainingFeedback submit_training(const std::string& annotator_id, int item_index, CategorySet answer,
                                     std::int64_t now);

    // Index into spec().tasks, or nullopt when nothing is left for this
    // annotator. Re-requesting while holding an active lease returns it.
    std::optional<std::size_t> assign(const std::string& annotator_id, std::int64_t now);
    SubmitOutcome submit(const std::string& annotator_id, const std::string& comment_id, CategorySet categories,
                         std::int64_t now);

    int main_submissions(const std::string& annotator_id) const;
    // True while some open comment has no record from this annotator.
    bool has_open_work(const std::string& annotator_id) const;
    std::vector<AnnotationRecord> records() const;
    std::vector<AnnotationRecord> records_for(const std::string& comment_id) const;
    std::size_t record_count(std::size_t task) const;
    bool complete() const;
    CampaignProgress progress(std::int64_t now) const;

private:
    struct Lease {
        std::size_t task = 0;
        std::int64_t expires_at = 0;
    };
    struct Annotator {
        AnnotatorProfile profile;
        std::vector<CategorySet> training_answers;
        std::optional<Lease> lease;
        int main_submissions = 0;
    };

    void replay(const std::filesystem::path& log);
    void append(const std::string& line);
    Annotator& require(const std::string& annotator_id);
    const Annotator* find(const std::string& annotator_id) const;
    std::size_t active_leases(std::size_t task, std::int64_t now, const std::string& except) const;
    bool labeled_by(std::size_t task, const std::string& annotator_id) const;

    void apply_register(const std::string& annotator_id);
    void apply_intro(Annotator& a);
    void apply_training(Annotator& a, CategorySet answer);
    void apply_assign(Annotator& a, std::size_t task, std::int64_t now);
    void apply_submit(Annotator& a, std::size_t task, CategorySet categories, std::int64_t now);

    CampaignSpec spec_;
    CampaignOptions options_;
    std::unordered_map<std::string, std::size_t> task_index_;
    std::map<std::string, Annotator> annotators_;
    std::vector<std::vector<AnnotationRecord>> records_;
    std::uint64_t assignments_ = 0;
    std::ofstream log_;
    mutable std::mutex mutex_;
};

struct CampaignExport {
    std::vector<AnnotatedComment> flagged;
    std::vector<AnnotatedComment> unflagged;
    std::vector<AnnotatedComment> moderated;
    std::vector<std::string> fallback_ids;
    std::size_t open_tasks = 0;
    bool partial = false;
    bool has_moderated_pool = false;
};

// Consensus for every closed task. Open tasks are an error unless partial.
CampaignExport export_campaign(const Campaign& campaign, bool partial);

// CSV with header comment_id,stratum_id,flagged,violating,categories.
std::string format_annotations(std::span<const AnnotatedComment> rows);
void write_annotations(const std::filesystem::path& path, std::span<const AnnotatedComment> rows);
std::vector<AnnotatedComment> read_annotations(const std::filesystem::path& path);

// flagged.csv, unflagged.csv, moderated.csv (when the campaign has a moderated
// pool) and export_meta.json.
std::string export_meta_json(const CampaignExport& result);
void write_export(const std::filesystem::path& dir, const CampaignExport& result);

struct SimulationSummary {
    int annotators = 0;
    int qualified = 0;
    int rejected = 0;
    std::size_t records = 0;
};

// Scripted annotators: each answer equals the truth with probability
// `accuracy`, otherwise one uniformly chosen category is toggled. Annotators
// join until the campaign completes or `max_annotators` have joined.
SimulationSummary simulate_annotators(Campaign& campaign, const std::map<std::string, CategorySet>& truth,
                                      int annotators_per_wave, double accuracy, std::uint64_t seed,
                                      std::int64_t start_time, int max_annotators = 200);

// Answer model shared by the scripted annotators and the tests.
CategorySet noisy_answer(CategorySet truth, double accuracy, Rng& rng);

}  // namespace normwatch
