#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <thread>

#include "campaign_fixture.hpp"
#include "normwatch/annotation.hpp"
#include "normwatch/rng.hpp"
#include "normwatch/textio.hpp"

using namespace normwatch;
namespace fs = std::filesystem;

TEST_CASE("category sets") {
    CategorySet s{NormCategory::personal_attack, NormCategory::bigotry};
    CHECK(s.size() == 2);
    CHECK(to_string(s) == "bigotry|personal_attack");
    CHECK(parse_category_set("personal_attack|bigotry") == s);
    CHECK(parse_category_set("").empty());
    CHECK(to_string(CategorySet{}).empty());
    CHECK_THROWS_AS(parse_category_set("bigotry|nope"), std::invalid_argument);
    for (auto c : kNormCategories) {
        CHECK(parse_norm_category(to_string(c)) == c);
        CHECK(!norm_definition(c).empty());
    }
    for (unsigned bits = 0; bits < 256; ++bits) {
        const auto set = CategorySet::from_bits(static_cast<std::uint8_t>(bits));
        CHECK(parse_category_set(to_string(set)) == set);
    }
}

TEST_CASE("cronbach alpha") {
    SUBCASE("identical raters give 1") {
        Eigen::MatrixXd m(5, 2);
        m << 1, 1, 0, 0, 1, 1, 1, 1, 0, 0;
        CHECK(cronbach_alpha(m) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("hand-computed matrix gives 0") {
        // Rater variances 1/3 each, row-sum variance 2/3: alpha = 2 (1 - 1) = 0.
        Eigen::MatrixXd m(4, 2);
        m << 1, 1, 0, 1, 1, 0, 0, 0;
        CHECK(std::abs(cronbach_alpha(m)) < 1e-15);
    }
    SUBCASE("independent random binary raters are near zero") {
        // A single 1000-item draw has standard deviation near 0.063, so the
        // check is on the Monte Carlo mean and spread.
        Rng rng(17);
        Eigen::MatrixXd m(1000, 2);
        double sum = 0.0, sumsq = 0.0;
        const int reps = 200;
        for (int rep = 0; rep < reps; ++rep) {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            const double a = cronbach_alpha(m);
            sum += a;
            sumsq += a * a;
        }
        const double mean = sum / reps;
        CHECK(std::abs(mean) < 0.02);
        CHECK(std::sqrt(sumsq / reps - mean * mean) < 0.1);
    }
    SUBCASE("invariant under positive affine maps") {
        Rng rng(2);
        Eigen::MatrixXd m(30, 4);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() + (i % 30) * 0.1;
        const double base = cronbach_alpha(m);
        for (double a : {0.5, 3.0, 17.0})
            for (double b : {-4.0, 0.0, 9.5})
                CHECK(cronbach_alpha((a * m.array() + b).matrix()) == doctest::Approx(base).epsilon(1e-10));
    }
    SUBCASE("templated on the scalar type") {
        Eigen::MatrixXf m(4, 2);
        m << 1, 1, 0, 0, 1, 1, 0, 1;
        Eigen::MatrixXd d = m.cast<double>();
        CHECK(cronbach_alpha(m) == doctest::Approx(static_cast<float>(cronbach_alpha(d))));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(cronbach_alpha(Eigen::MatrixXd::Ones(4, 2)), std::domain_error);
        CHECK_THROWS_AS(cronbach_alpha(Eigen::MatrixXd::Zero(1, 2)), std::invalid_argument);
        CHECK_THROWS_AS(cronbach_alpha(Eigen::MatrixXd::Zero(4, 1)), std::invalid_argument);
    }
}

namespace {

std::vector<CategorySet> varied_gold() {
    std::vector<CategorySet> gold(10);
    gold[0] = {NormCategory::personal_attack};
    gold[2] = {NormCategory::bigotry, NormCategory::misogyny_vulgarity};
    gold[5] = {NormCategory::political_inflammatory};
    gold[7] = {NormCategory::personal_attack, NormCategory::moderator_abuse};
    return gold;
}

AnnotatorProfile trained_profile() {
    AnnotatorProfile p;
    p.annotator_id = "a";
    p.intro_done = true;
    p.training_progress = kTrainingItems;
    return p;
}

}  // namespace

TEST_CASE("qualification") {
    const auto gold = varied_gold();
    SUBCASE("exact match qualifies") {
        const auto p = qualify(trained_profile(), gold, gold);
        CHECK(p.state == AnnotatorState::qualified);
        CHECK(*p.alpha == doctest::Approx(1.0));
    }
    SUBCASE("constant empty answers against varying gold are rejected") {
        const std::vector<CategorySet> empty(10);
        const auto p = qualify(trained_profile(), empty, gold);
        CHECK(p.state == AnnotatorState::rejected);
        CHECK(*p.alpha <= 0.0);
    }
    SUBCASE("the threshold is inclusive") {
        CHECK(passes_qualification(0.7));
        CHECK_FALSE(passes_qualification(std::nextafter(0.7, 0.0)));
        CHECK(passes_qualification(1.0));
    }
    SUBCASE("exact complement gives minus infinity") {
        std::vector<CategorySet> complement;
        for (auto g : gold) complement.push_back(CategorySet::from_bits(static_cast<std::uint8_t>(~g.bits())));
        CHECK(qualification_alpha(complement, gold) == -std::numeric_limits<double>::infinity());
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(qualify(trained_profile(), std::vector<CategorySet>(9), gold), std::invalid_argument);
        auto early = trained_profile();
        early.training_progress = 29;
        CHECK_THROWS_AS(qualify(early, gold, gold), std::invalid_argument);
    }
    SUBCASE("turning a disagreeing cell into agreement never revokes qualification") {
        Rng rng(44);
        int checked = 0;
        for (int trial = 0; trial < 3000; ++trial) {
            std::vector<CategorySet> answers;
            for (auto g : gold) answers.push_back(noisy_answer(g, 0.7, rng));
            const double before = qualification_alpha(answers, gold);
            if (!passes_qualification(before)) continue;
            std::vector<std::pair<std::size_t, NormCategory>> disagreements;
            for (std::size_t i = 0; i < answers.size(); ++i)
                for (auto c : kNormCategories)
                    if (answers[i].contains(c) != gold[i].contains(c)) disagreements.emplace_back(i, c);
            if (disagreements.empty()) continue;
            const auto [item, cat] = disagreements[rng.below(disagreements.size())];
            answers[item].toggle(cat);
            ++checked;
            CHECK(passes_qualification(qualification_alpha(answers, gold)));
        }
        CHECK(checked > 100);
    }
}

namespace {

AnnotationRecord rec(const std::string& annotator, CategorySet cats) { return {"c", annotator, cats, 0}; }

}  // namespace

TEST_CASE("consensus") {
    using NC = NormCategory;
    SUBCASE("unanimous non-violating") {
        std::vector<AnnotationRecord> r{rec("a", {}), rec("b", {}), rec("c", {})};
        const auto c = consensus(r);
        CHECK_FALSE(c.violating);
        CHECK(c.categories.empty());
        CHECK(c.n_raters == 3);
    }
    SUBCASE("per-category majority") {
        std::vector<AnnotationRecord> r{rec("a", {NC::personal_attack}), rec("b", {NC::personal_attack, NC::bigotry}),
                                        rec("c", {})};
        const auto c = consensus(r);
        CHECK(c.violating);
        CHECK(c.categories == CategorySet{NC::personal_attack});
        CHECK_FALSE(c.fallback);
    }
    SUBCASE("union fallback when no category reaches two votes") {
        std::vector<AnnotationRecord> r{rec("a", {NC::bigotry}), rec("b", {NC::misogyny_vulgarity}),
                                        rec("c", {NC::political_inflammatory})};
        const auto c = consensus(r);
        CHECK(c.violating);
        CHECK(c.categories == CategorySet{NC::bigotry, NC::misogyny_vulgarity, NC::political_inflammatory});
        CHECK(c.fallback);
    }
    SUBCASE("single violating vote is not a violation") {
        std::vector<AnnotationRecord> r{rec("a", {NC::bigotry}), rec("b", {}), rec("c", {})};
        CHECK_FALSE(consensus(r).violating);
        CHECK(consensus(r).categories.empty());
    }
    SUBCASE("errors") {
        std::vector<AnnotationRecord> dup{rec("a", {}), rec("a", {}), rec("c", {})};
        CHECK_THROWS_AS(consensus(dup), std::invalid_argument);
        std::vector<AnnotationRecord> two{rec("a", {}), rec("b", {})};
        CHECK_THROWS_AS(consensus(two), std::invalid_argument);
    }
    SUBCASE("invariant under permutation of the records") {
        Rng rng(8);
        for (int trial = 0; trial < 300; ++trial) {
            std::vector<AnnotationRecord> r;
            for (const char* who : {"x", "y", "z"})
                r.push_back(rec(who, CategorySet::from_bits(static_cast<std::uint8_t>(rng.below(256) & rng.below(256)))));
            const auto base = consensus(r);
            std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.annotator_id < b.annotator_id; });
            do {
                const auto c = consensus(r);
                CHECK(c.violating == base.violating);
                CHECK(c.categories == base.categories);
                CHECK(c.fallback == base.fallback);
            } while (std::next_permutation(r.begin(), r.end(), [](const auto& a, const auto& b) {
                return a.annotator_id < b.annotator_id;
            }));
        }
    }
}

TEST_CASE("majority of three 95%-accurate annotators agrees with gold") {
    // 194 items, alpha of the consensus against gold over item x category cells.
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        std::vector<CategorySet> gold, majority;
        for (int i = 0; i < 194; ++i) {
            CategorySet g;
            if (rng.bernoulli(0.4)) g.insert(kNormCategories[rng.below(8)]);
            if (rng.bernoulli(0.1)) g.insert(kNormCategories[rng.below(8)]);
            std::vector<AnnotationRecord> r;
            for (const char* who : {"a", "b", "c"}) r.push_back(rec(who, noisy_answer(g, 0.95, rng)));
            gold.push_back(g);
            majority.push_back(consensus(r).categories);
        }
        CHECK(qualification_alpha(majority, gold) >= 0.8);
    }
}

TEST_CASE("campaign validation") {
    auto spec = testing::make_spec(3);
    CHECK_NOTHROW(validate(spec));
    auto short_training = spec;
    short_training.training.pop_back();
    CHECK_THROWS_AS(validate(short_training), std::invalid_argument);
    auto missing_intro = spec;
    missing_intro.intro.pop_back();
    CHECK_THROWS_WITH_AS(validate(missing_intro), doctest::Contains("exactly 2 intro"), std::invalid_argument);
    auto dup = spec;
    dup.tasks.push_back(dup.tasks.front());
    CHECK_THROWS_AS(validate(dup), std::invalid_argument);
    auto no_explanation = spec;
    no_explanation.training[3].explanation.clear();
    CHECK_THROWS_AS(validate(no_explanation), std::invalid_argument);

    const auto dir = fs::temp_directory_path() / "normwatch_campaign_rt";
    write_campaign(dir, spec);
    const auto loaded = load_campaign(dir);
    REQUIRE(loaded.training.size() == spec.training.size());
    CHECK(loaded.training[15].categories == spec.training[15].categories);
    CHECK(loaded.tasks[2].comment_id == spec.tasks[2].comment_id);
    CHECK(loaded.intro.size() == 16);
}

TEST_CASE("training flow") {
    Campaign campaign(testing::make_spec(2));
    const auto fresh = campaign.register_annotator("ann", 0);
    CHECK(fresh.state == AnnotatorState::in_training);
    CHECK(fresh.training_progress == 0);
    CHECK_THROWS_AS(campaign.submit_training("ann", 0, {}, 1), CampaignError);
    campaign.acknowledge_intro("ann", 1);
    CHECK_THROWS_AS(campaign.submit_training("ann", 1, {}, 1), CampaignError);
    CHECK_THROWS_AS(campaign.assign("ann", 1), CampaignError);

    const auto& training = campaign.spec().training;
    for (int i = 0; i < kTrainingItems; ++i) {
        // First twenty answers are deliberately wrong; only the last ten count.
        const auto answer = i < 20 ? CategorySet::from_bits(0xff) : training[static_cast<std::size_t>(i)].categories;
        const auto fb = campaign.submit_training("ann", i, answer, 2 + i);
        CHECK(fb.gold == training[static_cast<std::size_t>(i)].categories);
        CHECK(fb.explanation == training[static_cast<std::size_t>(i)].explanation);
        CHECK(fb.profile.training_progress == i + 1);
        if (i == 28) CHECK(fb.profile.state == AnnotatorState::in_training);
    }
    const auto p = *campaign.profile("ann");
    CHECK(p.state == AnnotatorState::qualified);
    CHECK(*p.alpha == doctest::Approx(1.0));
    const auto again = campaign.submit_training("ann", 4, {}, 99);
    CHECK(again.duplicate);
    CHECK(again.profile.state == AnnotatorState::qualified);
    CHECK(campaign.register_annotator("ann", 100).state == AnnotatorState::qualified);

    Campaign other(testing::make_spec(2));
    other.register_annotator("bad", 0);
    other.acknowledge_intro("bad", 0);
    for (int i = 0; i < kTrainingItems; ++i) other.submit_training("bad", i, {}, 0);
    CHECK(other.profile("bad")->state == AnnotatorState::rejected);
    CHECK(other.register_annotator("bad", 1).state == AnnotatorState::rejected);
    CHECK_THROWS_AS(other.assign("bad", 2), CampaignError);
}

TEST_CASE("assignment") {
    SUBCASE("one comment, three annotators, then complete") {
        Campaign campaign(testing::make_spec(1));
        for (const char* who : {"a", "b", "c", "d"}) testing::qualify_annotator(campaign, who);
        for (const char* who : {"a", "b", "c"}) {
            const auto t = campaign.assign(who, 10);
            REQUIRE(t.has_value());
            CHECK(*t == 0);
        }
        CHECK_FALSE(campaign.assign("d", 10).has_value());
        for (const char* who : {"a", "b", "c"}) campaign.submit(who, "c0", {}, 11);
        CHECK(campaign.complete());
        CHECK_FALSE(campaign.assign("a", 12).has_value());
    }
    SUBCASE("no repeat for an annotator who labeled the only open comment") {
        Campaign campaign(testing::make_spec(1));
        testing::qualify_annotator(campaign, "a");
        REQUIRE(campaign.assign("a", 0).has_value());
        campaign.submit("a", "c0", {}, 1);
        CHECK_FALSE(campaign.complete());
        CHECK_FALSE(campaign.assign("a", 2).has_value());
    }
    SUBCASE("fewest records first") {
        // Seed the store through its event log: c1 has two records, c2 none,
        // every other comment one.
        const auto spec = testing::make_spec(10);
        const auto log = fs::temp_directory_path() / "normwatch_priority_log.jsonl";
        std::string events;
        auto event = [&events](const std::string& body) { events += "{" + body + "}\n"; };
        for (const char* who : {"r0", "r1", "target"}) {
            const std::string w = std::string("\"annotator\":\"") + who + "\",\"at\":0";
            event("\"event\":\"register\"," + w);
            event("\"event\":\"intro\"," + w);
            for (const auto& g : spec.training)
                event("\"event\":\"training\"," + w + ",\"categories\":\"" + to_string(g.categories) + "\"");
        }
        auto label = [&](const std::string& who, const std::string& comment) {
            const std::string w = "\"annotator\":\"" + who + "\",\"comment\":\"" + comment + "\",\"at\":1";
            event("\"event\":\"assign\"," + w);
            event("\"event\":\"submit\"," + w + ",\"categories\":\"\"");
        };
        for (const auto& t : spec.tasks)
            if (t.comment_id != "c2") label("r0", t.comment_id);
        label("r1", "c1");
        write_file(log, events);
        Campaign campaign(spec, CampaignOptions{1800, 3}, log);
        CHECK(campaign.records_for("c1").size() == 2);
        CHECK(campaign.records_for("c2").empty());
        CHECK(campaign.records_for("c5").size() == 1);
        const auto t = campaign.assign("target", 10);
        REQUIRE(t.has_value());
        CHECK(campaign.spec().tasks[*t].comment_id == "c2");
    }
    SUBCASE("an active lease is returned again") {
        Campaign campaign(testing::make_spec(5));
        testing::qualify_annotator(campaign, "a");
        const auto first = campaign.assign("a", 0);
        CHECK(campaign.assign("a", 100) == first);
        CHECK(campaign.progress(100).active_leases == 1);
        CHECK(campaign.progress(100000).active_leases == 0);
    }
}

TEST_CASE("submission rules") {
    Campaign campaign(testing::make_spec(1), CampaignOptions{60, 0});
    for (const char* who : {"a", "b", "c", "d"}) testing::qualify_annotator(campaign, who);
    CHECK_THROWS_AS(campaign.submit("a", "c0", {}, 0), CampaignError);  // not assigned
    CHECK_THROWS_AS(campaign.submit("a", "nope", {}, 0), CampaignError);
    REQUIRE(campaign.assign("a", 0).has_value());
    REQUIRE(campaign.assign("b", 0).has_value());
    REQUIRE(campaign.assign("c", 0).has_value());
    CHECK_FALSE(campaign.assign("d", 10).has_value());
    // a's lease lapses; d takes the slot.
    REQUIRE(campaign.assign("d", 100).has_value());
    const auto first = campaign.submit("b", "c0", {NormCategory::bigotry}, 101);
    CHECK_FALSE(first.duplicate);
    CHECK(first.main_submissions == 1);
    const auto dup = campaign.submit("b", "c0", {}, 102);
    CHECK(dup.duplicate);
    CHECK(campaign.records_for("c0").size() == 1);
    CHECK(campaign.records_for("c0")[0].categories == CategorySet{NormCategory::bigotry});
    campaign.submit("c", "c0", {}, 103);
    const auto third = campaign.submit("d", "c0", {}, 104);
    CHECK(third.comment_closed);
    try {
        campaign.submit("a", "c0", {}, 105);
        FAIL("fourth record accepted");
    } catch (const CampaignError& e) {
        CHECK(e.kind() == CampaignError::Kind::conflict);
    }
    CHECK(campaign.records_for("c0").size() == 3);
}

TEST_CASE("event log replay reproduces the campaign") {
    const auto log = fs::temp_directory_path() / "normwatch_campaign_log.jsonl";
    fs::remove(log);
    const auto spec = testing::make_spec(12);
    std::map<std::string, CategorySet> truth;
    for (const auto& t : spec.tasks) truth[t.comment_id] = t.comment_id == "c3" ? CategorySet{NormCategory::bigotry} : CategorySet{};
    std::vector<AnnotationRecord> before;
    {
        Campaign campaign(spec, CampaignOptions{1800, 5}, log);
        testing::qualify_annotator(campaign, "x", 0);
        campaign.register_annotator("y", 1);
        campaign.acknowledge_intro("y", 2);
        campaign.submit_training("y", 0, {}, 3);
        simulate_annotators(campaign, truth, 4, 0.95, 9, 1000);
        campaign.assign("x", 999999);
        before = campaign.records();
    }
    Campaign replayed(spec, CampaignOptions{1800, 5}, log);
    const auto after = replayed.records();
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i) {
        CHECK(after[i].comment_id == before[i].comment_id);
        CHECK(after[i].annotator_id == before[i].annotator_id);
        CHECK(after[i].categories == before[i].categories);
        CHECK(after[i].submitted_at == before[i].submitted_at);
    }
    CHECK(replayed.profile("y")->training_progress == 1);
    CHECK(replayed.profile("x")->state == AnnotatorState::qualified);
    CHECK(replayed.complete());
    const auto log_size = fs::file_size(log);
    replayed.register_annotator("z", 5);
    CHECK(fs::file_size(log) > log_size);
}

TEST_CASE("concurrent annotators never exceed three records per comment") {
    const int n_tasks = 120;
    Campaign campaign(testing::make_spec(n_tasks), CampaignOptions{1800, 11});
    const int n_annotators = 50;
    for (int i = 0; i < n_annotators; ++i) testing::qualify_annotator(campaign, "w" + std::to_string(i));
    std::atomic<int> violations{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < n_annotators; ++i)
        threads.emplace_back([&, i] {
            const std::string id = "w" + std::to_string(i);
            for (int step = 0; step < 1000; ++step) {
                const auto t = campaign.assign(id, step);
                if (!t) return;
                // A second assign before submitting must return the same open task.
                if (campaign.assign(id, step) != t) ++violations;
                try {
                    campaign.submit(id, campaign.spec().tasks[*t].comment_id, {}, step);
                } catch (const CampaignError&) {
                    ++violations;
                }
            }
        });
    for (auto& t : threads) t.join();
    CHECK(violations == 0);
    CHECK(campaign.complete());
    for (int t = 0; t < n_tasks; ++t) {
        const auto records = campaign.records_for("c" + std::to_string(t));
        CHECK(records.size() == 3);
        std::set<std::string> raters;
        for (const auto& r : records) raters.insert(r.annotator_id);
        CHECK(raters.size() == 3);
    }
}

TEST_CASE("export") {
    const auto dir = fs::temp_directory_path() / "normwatch_export_test";
    fs::remove_all(dir);
    SUBCASE("empty campaign with partial writes header-only files") {
        Campaign campaign(testing::make_spec(0));
        const auto result = export_campaign(campaign, true);
        write_export(dir, result);
        CHECK(read_file(dir / "flagged.csv") == "comment_id,stratum_id,flagged,violating,categories\n");
        CHECK(read_file(dir / "unflagged.csv") == "comment_id,stratum_id,flagged,violating,categories\n");
        CHECK_FALSE(fs::exists(dir / "moderated.csv"));
    }
    SUBCASE("open comments need partial") {
        Campaign campaign(testing::make_spec(2));
        CHECK_THROWS_AS(export_campaign(campaign, false), std::invalid_argument);
        CHECK(export_campaign(campaign, true).open_tasks == 2);
    }
    SUBCASE("closed campaign exports consensus rows that read back") {
        auto spec = testing::make_spec(6);
        for (int i = 3; i < 6; ++i) spec.tasks[static_cast<std::size_t>(i)].pool = TaskPool::unflagged;
        Campaign campaign(spec, CampaignOptions{1800, 4});
        std::map<std::string, CategorySet> truth;
        for (const auto& t : spec.tasks) truth[t.comment_id] = {};
        truth["c1"] = {NormCategory::personal_attack, NormCategory::bigotry};
        truth["c4"] = {NormCategory::pornographic_link};
        simulate_annotators(campaign, truth, 3, 1.0, 1, 0);
        const auto result = export_campaign(campaign, false);
        CHECK(result.flagged.size() == 3);
        CHECK(result.unflagged.size() == 3);
        write_export(dir, result);
        const auto flagged = read_annotations(dir / "flagged.csv");
        REQUIRE(flagged.size() == 3);
        for (const auto& row : flagged) {
            CHECK(row.flagged);
            CHECK(row.violating == (row.comment_id == "c1"));
            if (row.comment_id == "c1") CHECK(row.categories == truth["c1"]);
        }
        const auto unflagged = read_annotations(dir / "unflagged.csv");
        REQUIRE(unflagged.size() == 3);
        CHECK_FALSE(unflagged[0].flagged);
        CHECK(read_file(dir / "flagged.csv").find("c1,s1,1,1,bigotry|personal_attack\n") != std::string::npos);
    }
    SUBCASE("malformed rows are rejected with a line number") {
        write_file(dir / "bad.csv", "comment_id,stratum_id,flagged,violating,categories\nc,s,1,0,bigotry\n");
        CHECK_THROWS_WITH_AS(read_annotations(dir / "bad.csv"), doctest::Contains(":2:"), std::invalid_argument);
        write_file(dir / "bad2.csv", "id,stratum_id,flagged,violating,categories\n");
        CHECK_THROWS_AS(read_annotations(dir / "bad2.csv"), std::invalid_argument);
    }
}

TEST_CASE("scripted annotators complete a campaign") {
    auto spec = testing::make_spec(40);
    std::map<std::string, CategorySet> truth;
    Rng rng(3);
    for (const auto& t : spec.tasks)
        truth[t.comment_id] = rng.bernoulli(0.3) ? CategorySet{kNormCategories[rng.below(8)]} : CategorySet{};
    Campaign campaign(spec, CampaignOptions{1800, 2});
    const auto summary = simulate_annotators(campaign, truth, 5, 0.95, 7, 0);
    CHECK(campaign.complete());
    CHECK(summary.records == 120);
    CHECK(summary.qualified >= 3);
    CHECK(summary.qualified + summary.rejected == summary.annotators);
}
