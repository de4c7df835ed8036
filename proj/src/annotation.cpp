#include "normwatch/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "normwatch/textio.hpp"

namespace normwatch {

namespace {

using json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 8> kCategoryNames{
    "misogyny_vulgarity", "political_inflammatory", "bigotry",         "attack_on_platform",
    "pornographic_link",  "personal_attack",        "moderator_abuse", "claiming_too_sensitive",
};

constexpr std::array<std::string_view, 8> kDefinitions{
    "Using misogynistic or vulgar slurs",
    "Inflammatory political claims",
    "Bigotry",
    "Verbal attacks on Reddit or specific subreddits",
    "Posting pornographic links",
    "Personal attacks",
    "Abusing and criticizing moderators",
    "Claiming the other person is too sensitive",
};

json categories_json(CategorySet set) {
    json out = json::array();
    for (auto c : set.members()) out.push_back(std::string(to_string(c)));
    return out;
}

CategorySet categories_from_json(const json& j) {
    if (!j.is_array()) throw std::invalid_argument("categories must be an array");
    CategorySet set;
    for (const auto& item : j) {
        if (!item.is_string()) throw std::invalid_argument("category names must be strings");
        const auto c = parse_norm_category(item.get<std::string>());
        if (!c) throw std::invalid_argument("unknown norm category '" + item.get<std::string>() + "'");
        set.insert(*c);
    }
    return set;
}

std::string string_field(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw std::invalid_argument(std::string("missing string field '") + key + "'");
    return j[key].get<std::string>();
}

template <typename F>
void for_each_jsonl(const std::filesystem::path& path, F&& f) {
    const auto content = read_file(path);
    std::size_t line_no = 0;
    for (const auto& line : split(content, '\n')) {
        ++line_no;
        if (line.empty()) continue;
        try {
            f(json::parse(line));
        } catch (const std::exception& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

}  // namespace

std::string_view to_string(NormCategory category) { return kCategoryNames[static_cast<std::size_t>(category)]; }

std::optional<NormCategory> parse_norm_category(std::string_view text) {
    for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
        if (kCategoryNames[i] == text) return static_cast<NormCategory>(i);
    return std::nullopt;
}

std::string_view norm_definition(NormCategory category) { return kDefinitions[static_cast<std::size_t>(category)]; }

std::vector<NormCategory> CategorySet::members() const {
    std::vector<NormCategory> out;
    for (auto c : kNormCategories)
        if (contains(c)) out.push_back(c);
    return out;
}

std::string to_string(CategorySet set) {
    std::string out;
    for (auto c : set.members()) {
        if (!out.empty()) out += '|';
        out += to_string(c);
    }
    return out;
}

CategorySet parse_category_set(std::string_view text) {
    CategorySet set;
    if (text.empty()) return set;
    for (const auto& name : split(text, '|')) {
        const auto c = parse_norm_category(name);
        if (!c) throw std::invalid_argument("unknown norm category '" + name + "'");
        set.insert(*c);
    }
    return set;
}

double qualification_alpha(std::span<const CategorySet> answers, std::span<const CategorySet> gold) {
    if (answers.size() != gold.size()) throw std::invalid_argument("answers and gold differ in length");
    const auto cells = static_cast<Eigen::Index>(answers.size() * kNormCategories.size());
    Eigen::MatrixXd ratings(cells, 2);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < answers.size(); ++i)
        for (auto c : kNormCategories) {
            ratings(row, 0) = answers[i].contains(c) ? 1.0 : 0.0;
            ratings(row, 1) = gold[i].contains(c) ? 1.0 : 0.0;
            ++row;
        }
    try {
        return cronbach_alpha(ratings);
    } catch (const std::domain_error&) {
        if (ratings.col(0) == ratings.col(1)) throw;
        return -std::numeric_limits<double>::infinity();
    }
}

std::string_view to_string(AnnotatorState state) {
    switch (state) {
        case AnnotatorState::in_training: return "in_training";
        case AnnotatorState::qualified: return "qualified";
        case AnnotatorState::rejected: return "rejected";
    }
    return "in_training";
}

AnnotatorProfile qualify(AnnotatorProfile profile, std::span<const CategorySet> test_answers,
                         std::span<const CategorySet> gold) {
    if (profile.training_progress != kTrainingItems)
        throw std::invalid_argument("qualification requires " + std::to_string(kTrainingItems) +
                                    " completed training items");
    if (test_answers.size() < static_cast<std::size_t>(kTestItems) ||
        gold.size() < static_cast<std::size_t>(kTestItems))
        throw std::invalid_argument("qualification needs " + std::to_string(kTestItems) + " test records");
    const double alpha = qualification_alpha(test_answers.last(kTestItems), gold.last(kTestItems));
    profile.alpha = alpha;
    profile.state = passes_qualification(alpha) ? AnnotatorState::qualified : AnnotatorState::rejected;
    return profile;
}

AnnotatedComment consensus(std::span<const AnnotationRecord> records) {
    if (records.size() != static_cast<std::size_t>(kRatersPerComment))
        throw std::invalid_argument("consensus needs exactly 3 records");
    std::set<std::string> raters;
    for (const auto& r : records) {
        if (r.comment_id != records[0].comment_id) throw std::invalid_argument("records refer to different comments");
        if (!raters.insert(r.annotator_id).second)
            throw std::invalid_argument("duplicate annotator '" + r.annotator_id + "' in consensus input");
    }
    AnnotatedComment out;
    out.comment_id = records[0].comment_id;
    out.n_raters = kRatersPerComment;
    int violating_votes = 0;
    CategorySet union_set;
    for (const auto& r : records) {
        if (r.categories.empty()) continue;
        ++violating_votes;
        union_set = union_set | r.categories;
    }
    out.violating = violating_votes >= 2;
    if (!out.violating) return out;
    for (auto c : kNormCategories) {
        int votes = 0;
        for (const auto& r : records) votes += r.categories.contains(c) ? 1 : 0;
        if (votes >= 2) out.categories.insert(c);
    }
    if (out.categories.empty()) {
        out.categories = union_set;
        out.fallback = true;
    }
    return out;
}

std::string_view to_string(TaskPool pool) {
    switch (pool) {
        case TaskPool::flagged: return "flagged";
        case TaskPool::unflagged: return "unflagged";
        case TaskPool::moderated: return "moderated";
    }
    return "flagged";
}

std::optional<TaskPool> parse_task_pool(std::string_view text) {
    if (text == "flagged") return TaskPool::flagged;
    if (text == "unflagged") return TaskPool::unflagged;
    if (text == "moderated") return TaskPool::moderated;
    return std::nullopt;
}

void validate(const CampaignSpec& spec) {
    std::array<int, 8> per_norm{};
    for (const auto& g : spec.intro) {
        if (g.categories.size() != 1)
            throw std::invalid_argument("intro example '" + g.id + "' must carry exactly one category");
        ++per_norm[static_cast<std::size_t>(g.categories.members().front())];
    }
    for (auto c : kNormCategories)
        if (per_norm[static_cast<std::size_t>(c)] != 2)
            throw std::invalid_argument("norm '" + std::string(to_string(c)) + "' needs exactly 2 intro examples");
    if (spec.training.size() != static_cast<std::size_t>(kTrainingItems))
        throw std::invalid_argument("campaign needs exactly " + std::to_string(kTrainingItems) + " training items");
    std::set<std::string> ids;
    bool test_varies = false;
    for (std::size_t i = 0; i < spec.training.size(); ++i) {
        const auto& g = spec.training[i];
        if (i >= static_cast<std::size_t>(kTrainingItems - kTestItems) && !g.categories.empty()) test_varies = true;
    }
    for (const auto* list : {&spec.intro, &spec.training})
        for (const auto& g : *list) {
            if (g.explanation.empty()) throw std::invalid_argument("gold example '" + g.id + "' has no explanation");
            if (!ids.insert(g.id).second) throw std::invalid_argument("duplicate gold id '" + g.id + "'");
        }
    if (!test_varies) throw std::invalid_argument("the ten test items must contain at least one violation");
    std::set<std::string> task_ids;
    for (const auto& t : spec.tasks)
        if (!task_ids.insert(t.comment_id).second)
            throw std::invalid_argument("duplicate task comment id '" + t.comment_id + "'");
}

void load_gold(const std::filesystem::path& path, CampaignSpec& spec) {
    spec.intro.clear();
    spec.training.clear();
    for_each_jsonl(path, [&](const json& j) {
        GoldExample g{string_field(j, "id"), string_field(j, "body"), categories_from_json(j.at("categories")),
                      string_field(j, "explanation")};
        const auto role = string_field(j, "role");
        if (role == "intro") spec.intro.push_back(std::move(g));
        else if (role == "training") spec.training.push_back(std::move(g));
        else throw std::invalid_argument("unknown gold role '" + role + "'");
    });
}

CampaignSpec load_campaign(const std::filesystem::path& dir) {
    CampaignSpec spec;
    load_gold(dir / "gold.jsonl", spec);
    for_each_jsonl(dir / "tasks.jsonl", [&](const json& j) {
        const auto pool = parse_task_pool(string_field(j, "pool"));
        if (!pool) throw std::invalid_argument("unknown task pool '" + j["pool"].get<std::string>() + "'");
        spec.tasks.push_back({string_field(j, "comment_id"), string_field(j, "stratum_id"), string_field(j, "body"), *pool});
    });
    validate(spec);
    return spec;
}

void write_campaign(const std::filesystem::path& dir, const CampaignSpec& spec) {
    std::string gold;
    auto add_gold = [&gold](const GoldExample& g, const char* role) {
        json j;
        j["id"] = g.id;
        j["role"] = role;
        j["body"] = g.body;
        j["categories"] = categories_json(g.categories);
        j["explanation"] = g.explanation;
        gold += j.dump() + "\n";
    };
    for (const auto& g : spec.intro) add_gold(g, "intro");
    for (const auto& g : spec.training) add_gold(g, "training");
    std::string tasks;
    for (const auto& t : spec.tasks) {
        json j;
        j["comment_id"] = t.comment_id;
        j["stratum_id"] = t.stratum_id;
        j["body"] = t.body;
        j["pool"] = std::string(to_string(t.pool));
        tasks += j.dump() + "\n";
    }
    write_file(dir / "gold.jsonl", gold);
    write_file(dir / "tasks.jsonl", tasks);
}

// ---------------------------------------------------------------------------
// Campaign store

Campaign::Campaign(CampaignSpec spec, CampaignOptions options) : spec_(std::move(spec)), options_(options) {
    validate(spec_);
    for (std::size_t i = 0; i < spec_.tasks.size(); ++i) task_index_.emplace(spec_.tasks[i].comment_id, i);
    records_.resize(spec_.tasks.size());
}

Campaign::Campaign(CampaignSpec spec, CampaignOptions options, const std::filesystem::path& log)
    : Campaign(std::move(spec), options) {
    if (std::filesystem::exists(log)) replay(log);
    if (log.has_parent_path()) std::filesystem::create_directories(log.parent_path());
    log_.open(log, std::ios::binary | std::ios::app);
    if (!log_) throw std::runtime_error("cannot open campaign log " + log.string());
}

void Campaign::replay(const std::filesystem::path& log) {
    for_each_jsonl(log, [&](const json& e) {
        const auto type = string_field(e, "event");
        const auto who = string_field(e, "annotator");
        if (type == "register") {
            apply_register(who);
            return;
        }
        auto& a = require(who);
        if (type == "intro") {
            apply_intro(a);
        } else if (type == "training") {
            apply_training(a, parse_category_set(string_field(e, "categories")));
        } else if (type == "assign") {
            apply_assign(a, task_index_.at(string_field(e, "comment")), e.at("at").get<std::int64_t>());
        } else if (type == "submit") {
            apply_submit(a, task_index_.at(string_field(e, "comment")),
                         parse_category_set(string_field(e, "categories")), e.at("at").get<std::int64_t>());
        } else {
            throw std::invalid_argument("unknown event '" + type + "'");
        }
    });
}

void Campaign::append(const std::string& line) {
    if (!log_.is_open()) return;
    log_ << line << '\n';
    log_.flush();
    if (!log_) throw std::runtime_error("campaign log write failed");
}

Campaign::Annotator& Campaign::require(const std::string& annotator_id) {
    auto it = annotators_.find(annotator_id);
    if (it == annotators_.end())
        throw CampaignError(CampaignError::Kind::not_found, "unknown annotator '" + annotator_id + "'");
    return it->second;
}

const Campaign::Annotator* Campaign::find(const std::string& annotator_id) const {
    auto it = annotators_.find(annotator_id);
    return it == annotators_.end() ? nullptr : &it->second;
}

std::size_t Campaign::active_leases(std::size_t task, std::int64_t now, const std::string& except) const {
    std::size_t n = 0;
    for (const auto& [id, a] : annotators_)
        if (id != except && a.lease && a.lease->task == task && a.lease->expires_at > now) ++n;
    return n;
}

bool Campaign::labeled_by(std::size_t task, const std::string& annotator_id) const {
    return std::any_of(records_[task].begin(), records_[task].end(),
                       [&](const AnnotationRecord& r) { return r.annotator_id == annotator_id; });
}

void Campaign::apply_register(const std::string& annotator_id) {
    Annotator a;
    a.profile.annotator_id = annotator_id;
    annotators_.emplace(annotator_id, std::move(a));
}

void Campaign::apply_intro(Annotator& a) { a.profile.intro_done = true; }

void Campaign::apply_training(Annotator& a, CategorySet answer) {
    a.training_answers.push_back(answer);
    a.profile.training_progress = static_cast<int>(a.training_answers.size());
    if (a.profile.training_progress == kTrainingItems) {
        std::vector<CategorySet> gold;
        for (const auto& g : spec_.training) gold.push_back(g.categories);
        a.profile = qualify(a.profile, a.training_answers, gold);
    }
}

void Campaign::apply_assign(Annotator& a, std::size_t task, std::int64_t now) {
    a.lease = Lease{task, now + options_.lease_seconds};
    ++assignments_;
}

void Campaign::apply_submit(Annotator& a, std::size_t task, CategorySet categories, std::int64_t now) {
    records_[task].push_back({spec_.tasks[task].comment_id, a.profile.annotator_id, categories, now});
    a.lease.reset();
    ++a.main_submissions;
}

AnnotatorProfile Campaign::register_annotator(const std::string& annotator_id, std::int64_t now) {
    if (annotator_id.empty()) throw CampaignError(CampaignError::Kind::invalid, "annotator id must be non-empty");
    std::lock_guard lock(mutex_);
    if (const auto* a = find(annotator_id)) return a->profile;
    json e;
    e["event"] = "register";
    e["annotator"] = annotator_id;
    e["at"] = now;
    append(e.dump());
    apply_register(annotator_id);
    return annotators_.at(annotator_id).profile;
}

std::optional<AnnotatorProfile> Campaign::profile(const std::string& annotator_id) const {
    std::lock_guard lock(mutex_);
    if (const auto* a = find(annotator_id)) return a->profile;
    return std::nullopt;
}

AnnotatorProfile Campaign::acknowledge_intro(const std::string& annotator_id, std::int64_t now) {
    std::lock_guard lock(mutex_);
    auto& a = require(annotator_id);
    if (a.profile.intro_done) return a.profile;
    json e;
    e["event"] = "intro";
    e["annotator"] = annotator_id;
    e["at"] = now;
    append(e.dump());
    apply_intro(a);
    return a.profile;
}

TrainingFeedback Campaign::submit_training(const std::string& annotator_id, int item_index, CategorySet answer,
                                           std::int64_t now) {
    std::lock_guard lock(mutex_);
    auto& a = require(annotator_id);
    if (!a.profile.intro_done)
        throw CampaignError(CampaignError::Kind::conflict, "introduction not yet acknowledged");
    if (item_index < 0 || item_index >= kTrainingItems)
        throw CampaignError(CampaignError::Kind::invalid, "training item " + std::to_string(item_index) + " out of range");
    TrainingFeedback fb;
    fb.item_index = item_index;
    fb.gold = spec_.training[static_cast<std::size_t>(item_index)].categories;
    fb.explanation = spec_.training[static_cast<std::size_t>(item_index)].explanation;
    if (item_index < a.profile.training_progress) {
        fb.duplicate = true;
        fb.profile = a.profile;
        return fb;
    }
    if (item_index > a.profile.training_progress)
        throw CampaignError(CampaignError::Kind::conflict,
                            "expected training item " + std::to_string(a.profile.training_progress));
    json e;
    e["event"] = "training";
    e["annotator"] = annotator_id;
    e["item"] = item_index;
    e["categories"] = to_string(answer);
    e["at"] = now;
    append(e.dump());
    apply_training(a, answer);
    fb.profile = a.profile;
    return fb;
}

std::optional<std::size_t> Campaign::assign(const std::string& annotator_id, std::int64_t now) {
    std::lock_guard lock(mutex_);
    auto& a = require(annotator_id);
    if (a.profile.state != AnnotatorState::qualified)
        throw CampaignError(CampaignError::Kind::forbidden, "annotator '" + annotator_id + "' is not qualified");
    if (a.lease && a.lease->expires_at > now && records_[a.lease->task].size() < kRatersPerComment)
        return a.lease->task;

    std::size_t best_load = kRatersPerComment;
    std::vector<std::size_t> candidates;
    for (std::size_t t = 0; t < spec_.tasks.size(); ++t) {
        const std::size_t load = records_[t].size() + active_leases(t, now, annotator_id);
        if (load >= kRatersPerComment || labeled_by(t, annotator_id)) continue;
        if (load < best_load) {
            best_load = load;
            candidates.clear();
        }
        if (load == best_load) candidates.push_back(t);
    }
    if (candidates.empty()) {
        a.lease.reset();
        return std::nullopt;
    }
    auto rng = Rng::stream(options_.seed, {stable_hash("assign"), assignments_});
    const std::size_t task = candidates[rng.below(candidates.size())];
    json e;
    e["event"] = "assign";
    e["annotator"] = annotator_id;
    e["comment"] = spec_.tasks[task].comment_id;
    e["at"] = now;
    append(e.dump());
    apply_assign(a, task, now);
    return task;
}

SubmitOutcome Campaign::submit(const std::string& annotator_id, const std::string& comment_id, CategorySet categories,
                               std::int64_t now) {
    std::lock_guard lock(mutex_);
    auto& a = require(annotator_id);
    if (a.profile.state != AnnotatorState::qualified)
        throw CampaignError(CampaignError::Kind::forbidden, "annotator '" + annotator_id + "' is not qualified");
    const auto it = task_index_.find(comment_id);
    if (it == task_index_.end())
        throw CampaignError(CampaignError::Kind::not_found, "unknown comment '" + comment_id + "'");
    const std::size_t task = it->second;
    SubmitOutcome out;
    if (labeled_by(task, annotator_id)) {
        out.duplicate = true;
        out.comment_closed = records_[task].size() >= kRatersPerComment;
        out.main_submissions = a.main_submissions;
        return out;
    }
    if (!a.lease || a.lease->task != task)
        throw CampaignError(CampaignError::Kind::conflict, "comment '" + comment_id + "' is not assigned to '" +
                                                               annotator_id + "'");
    if (records_[task].size() >= kRatersPerComment) {
        a.lease.reset();
        throw CampaignError(CampaignError::Kind::conflict, "comment '" + comment_id + "' already has 3 records");
    }
    json e;
    e["event"] = "submit";
    e["annotator"] = annotator_id;
    e["comment"] = comment_id;
    e["categories"] = to_string(categories);
    e["at"] = now;
    append(e.dump());
    apply_submit(a, task, categories, now);
    out.comment_closed = records_[task].size() >= kRatersPerComment;
    out.main_submissions = a.main_submissions;
    return out;
}

int Campaign::main_submissions(const std::string& annotator_id) const {
    std::lock_guard lock(mutex_);
    const auto* a = find(annotator_id);
    return a ? a->main_submissions : 0;
}

bool Campaign::has_open_work(const std::string& annotator_id) const {
    std::lock_guard lock(mutex_);
    for (std::size_t t = 0; t < records_.size(); ++t)
        if (records_[t].size() < static_cast<std::size_t>(kRatersPerComment) && !labeled_by(t, annotator_id))
            return true;
    return false;
}

std::vector<AnnotationRecord> Campaign::records() const {
    std::lock_guard lock(mutex_);
    std::vector<AnnotationRecord> out;
    for (const auto& list : records_) out.insert(out.end(), list.begin(), list.end());
    return out;
}

std::vector<AnnotationRecord> Campaign::records_for(const std::string& comment_id) const {
    std::lock_guard lock(mutex_);
    const auto it = task_index_.find(comment_id);
    if (it == task_index_.end()) return {};
    return records_[it->second];
}

std::size_t Campaign::record_count(std::size_t task) const {
    std::lock_guard lock(mutex_);
    return records_.at(task).size();
}

bool Campaign::complete() const {
    std::lock_guard lock(mutex_);
    return std::all_of(records_.begin(), records_.end(),
                       [](const auto& r) { return r.size() >= static_cast<std::size_t>(kRatersPerComment); });
}

CampaignProgress Campaign::progress(std::int64_t now) const {
    std::lock_guard lock(mutex_);
    CampaignProgress p;
    p.tasks = spec_.tasks.size();
    for (const auto& r : records_) {
        p.records += r.size();
        if (r.size() >= static_cast<std::size_t>(kRatersPerComment)) ++p.closed;
    }
    for (const auto& [id, a] : annotators_) {
        ++p.annotators_by_state[std::string(to_string(a.profile.state))];
        if (a.lease && a.lease->expires_at > now) ++p.active_leases;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Export

CampaignExport export_campaign(const Campaign& campaign, bool partial) {
    CampaignExport out;
    out.partial = partial;
    const auto& tasks = campaign.spec().tasks;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (tasks[t].pool == TaskPool::moderated) out.has_moderated_pool = true;
        const auto records = campaign.records_for(tasks[t].comment_id);
        if (records.size() < static_cast<std::size_t>(kRatersPerComment)) {
            ++out.open_tasks;
            continue;
        }
        auto c = consensus(records);
        c.stratum_id = tasks[t].stratum_id;
        c.flagged = tasks[t].pool == TaskPool::flagged;
        if (c.fallback) out.fallback_ids.push_back(c.comment_id);
        switch (tasks[t].pool) {
            case TaskPool::flagged: out.flagged.push_back(std::move(c)); break;
            case TaskPool::unflagged: out.unflagged.push_back(std::move(c)); break;
            case TaskPool::moderated: out.moderated.push_back(std::move(c)); break;
        }
    }
    if (out.open_tasks > 0 && !partial)
        throw std::invalid_argument("campaign has " + std::to_string(out.open_tasks) +
                                    " open comments; export with partial to write closed ones only");
    return out;
}

std::string format_annotations(std::span<const AnnotatedComment> rows) {
    std::string out = "comment_id,stratum_id,flagged,violating,categories\n";
    for (const auto& r : rows) {
        if (r.comment_id.find_first_of(",\n") != std::string::npos ||
            r.stratum_id.find_first_of(",\n") != std::string::npos)
            throw std::invalid_argument("ids must not contain commas or newlines: '" + r.comment_id + "'");
        out += r.comment_id + ',' + r.stratum_id + ',' + (r.flagged ? '1' : '0') + ',' + (r.violating ? '1' : '0') +
               ',' + to_string(r.categories) + '\n';
    }
    return out;
}

void write_annotations(const std::filesystem::path& path, std::span<const AnnotatedComment> rows) {
    write_file(path, format_annotations(rows));
}

std::vector<AnnotatedComment> read_annotations(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const std::vector<std::string> expected{"comment_id", "stratum_id", "flagged", "violating", "categories"};
    if (table.header != expected)
        throw std::invalid_argument(path.string() + ": expected header comment_id,stratum_id,flagged,violating,categories");
    std::vector<AnnotatedComment> out;
    std::size_t line = 1;
    for (const auto& row : table.rows) {
        ++line;
        auto bad = [&](const std::string& what) {
            return std::invalid_argument(path.string() + ":" + std::to_string(line) + ": " + what);
        };
        if (row.size() != expected.size()) throw bad("expected 5 fields");
        if ((row[2] != "0" && row[2] != "1") || (row[3] != "0" && row[3] != "1")) throw bad("flags must be 0 or 1");
        AnnotatedComment c;
        c.comment_id = row[0];
        c.stratum_id = row[1];
        c.flagged = row[2] == "1";
        c.violating = row[3] == "1";
        try {
            c.categories = parse_category_set(row[4]);
        } catch (const std::invalid_argument& e) {
            throw bad(e.what());
        }
        if (!c.violating && !c.categories.empty()) throw bad("non-violating row carries categories");
        c.n_raters = kRatersPerComment;
        out.push_back(std::move(c));
    }
    return out;
}

std::string export_meta_json(const CampaignExport& result) {
    json meta;
    meta["partial"] = result.partial;
    meta["open_comments"] = result.open_tasks;
    meta["flagged_rows"] = result.flagged.size();
    meta["unflagged_rows"] = result.unflagged.size();
    meta["moderated_rows"] = result.moderated.size();
    meta["fallback_comment_ids"] = result.fallback_ids;
    return meta.dump(2) + "\n";
}

void write_export(const std::filesystem::path& dir, const CampaignExport& result) {
    write_annotations(dir / "flagged.csv", result.flagged);
    write_annotations(dir / "unflagged.csv", result.unflagged);
    if (result.has_moderated_pool) write_annotations(dir / "moderated.csv", result.moderated);
    write_file(dir / "export_meta.json", export_meta_json(result));
}

// ---------------------------------------------------------------------------
// Scripted annotators

CategorySet noisy_answer(CategorySet truth, double accuracy, Rng& rng) {
    if (rng.bernoulli(accuracy)) return truth;
    truth.toggle(kNormCategories[rng.below(kNormCategories.size())]);
    return truth;
}

SimulationSummary simulate_annotators(Campaign& campaign, const std::map<std::string, CategorySet>& truth,
                                      int annotators_per_wave, double accuracy, std::uint64_t seed,
                                      std::int64_t start_time, int max_annotators) {
    if (annotators_per_wave < 1) throw std::invalid_argument("annotators_per_wave must be positive");
    SimulationSummary summary;
    std::int64_t now = start_time;
    const auto& spec = campaign.spec();
    while (!campaign.complete()) {
        if (summary.annotators >= max_annotators)
            throw std::runtime_error("simulated campaign did not complete with " + std::to_string(max_annotators) +
                                     " annotators");
        std::vector<std::string> wave;
        for (int i = 0; i < annotators_per_wave; ++i) {
            const std::string id = "sim" + std::to_string(summary.annotators++);
            auto rng = Rng::stream(seed, {stable_hash("annotator"), stable_hash(id)});
            campaign.register_annotator(id, now);
            campaign.acknowledge_intro(id, now);
            for (int item = 0; item < kTrainingItems; ++item)
                campaign.submit_training(id, item, noisy_answer(spec.training[item].categories, accuracy, rng), now += 5);
            if (campaign.profile(id)->state == AnnotatorState::qualified) {
                ++summary.qualified;
                wave.push_back(id);
            } else {
                ++summary.rejected;
            }
        }
        // Round-robin until every annotator in the wave runs out of work.
        std::vector<bool> done(wave.size(), false);
        std::size_t active = wave.size();
        while (active > 0) {
            for (std::size_t i = 0; i < wave.size(); ++i) {
                if (done[i]) continue;
                const auto task = campaign.assign(wave[i], now += 10);
                if (!task) {
                    done[i] = true;
                    --active;
                    continue;
                }
                const auto& comment_id = spec.tasks[*task].comment_id;
                const auto t = truth.find(comment_id);
                if (t == truth.end()) throw std::invalid_argument("no truth for comment '" + comment_id + "'");
                auto rng = Rng::stream(seed, {stable_hash("answer"), stable_hash(wave[i]), stable_hash(comment_id)});
                campaign.submit(wave[i], comment_id, noisy_answer(t->second, accuracy, rng), now += 10);
                ++summary.records;
            }
        }
    }
    return summary;
}

}  // namespace normwatch
