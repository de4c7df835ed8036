#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "normwatch/corpus.hpp"
#include "normwatch/rng.hpp"
#include "normwatch/textio.hpp"

using namespace normwatch;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
    const auto dir = fs::temp_directory_path() / "normwatch_test_corpus";
    fs::create_directories(dir);
    const auto path = dir / name;
    std::ofstream(path, std::ios::binary) << content;
    return path;
}

std::string comment_line(const std::string& id, const std::string& stratum,
                         const std::string& status = "online", const std::string& body = "hello there",
                         const std::string& period = "t2016") {
    return R"({"id":")" + id + R"(","stratum_id":")" + stratum + R"(","body":")" + body +
           R"(","created_at":1470000000,"score":3,"top_level_replies":1,"moderation_status":")" +
           status + R"(","period":")" + period + "\"}\n";
}

Corpus make_corpus(int moderated, int online, const std::string& stratum = "s1") {
    Corpus c;
    for (int i = 0; i < moderated + online; ++i) {
        Comment cm;
        cm.id = stratum + "_" + std::to_string(i);
        cm.stratum_id = stratum;
        cm.body = "word" + std::string(1, static_cast<char>('a' + i % 26)) + " common text";
        cm.moderation_status = i < moderated ? ModerationStatus::moderated : ModerationStatus::online;
        cm.period = "t2016";
        c.index.emplace(cm.id, c.comments.size());
        c.comments.push_back(cm);
        auto& counts = c.counts[stratum];
        (i < moderated ? counts.moderated : counts.online) += 1;
    }
    return c;
}

}  // namespace

TEST_CASE("preprocess lowercases and splits on non-letters") {
    CHECK(preprocess("").tokens.empty());
    CHECK(preprocess("HeLLo, W0rld!").tokens == std::vector<std::string>{"hello", "w", "rld"});
    CHECK(preprocess("a  b").tokens == std::vector<std::string>{"a", "b"});
    CHECK(preprocess("don't").tokens == std::vector<std::string>{"don", "t"});
    CHECK(preprocess("caf\xc3\xa9 ok").tokens == std::vector<std::string>{"caf", "ok"});
    PreprocessOptions keep_utf8{.ascii_only = false};
    CHECK(preprocess("Caf\xc3\xa9 ok", keep_utf8).tokens ==
          std::vector<std::string>{"caf\xc3\xa9", "ok"});
}

TEST_CASE("preprocess is idempotent on random text") {
    Rng rng(3);
    const std::string alphabet = "abcXYZ 019,.!?'\t\n-_";
    for (int trial = 0; trial < 500; ++trial) {
        std::string text;
        const auto len = rng.below(60);
        for (std::uint64_t i = 0; i < len; ++i) text.push_back(alphabet[rng.below(alphabet.size())]);
        const auto once = preprocess(text);
        CHECK(preprocess(join(once)) == once);
        for (const auto& t : once.tokens) {
            CHECK(!t.empty());
            CHECK(std::all_of(t.begin(), t.end(), [](char c) { return c >= 'a' && c <= 'z'; }));
        }
    }
}

TEST_CASE("load_corpus parses valid lines") {
    const auto path = temp_file("three.jsonl", comment_line("a", "s1") + comment_line("b", "s1", "moderated") +
                                                   comment_line("c", "s2", "bot"));
    const auto corpus = load_corpus(path, "t2016");
    CHECK(corpus.comments.size() == 3);
    CHECK(corpus.counts.at("s1").online == 1);
    CHECK(corpus.counts.at("s1").moderated == 1);
    CHECK(corpus.counts.at("s2").bot == 1);
    REQUIRE(corpus.find("b") != nullptr);
    CHECK(corpus.find("b")->moderation_status == ModerationStatus::moderated);
}

TEST_CASE("load_corpus error paths") {
    SUBCASE("duplicate id names the id") {
        const auto path = temp_file("dup.jsonl", comment_line("a", "s1") + comment_line("a", "s1"));
        try {
            load_corpus(path, "t2016");
            FAIL("expected an error");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("duplicate comment id 'a'") != std::string::npos);
            CHECK(std::string(e.what()).find(":2:") != std::string::npos);
        }
    }
    SUBCASE("malformed line names its number") {
        const auto path = temp_file("bad.jsonl", comment_line("a", "s1") + "{not json\n");
        try {
            load_corpus(path, "t2016");
            FAIL("expected an error");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find(":2: malformed") != std::string::npos);
        }
    }
    SUBCASE("extra field and negative replies are rejected") {
        auto extra = comment_line("a", "s1");
        extra.insert(extra.size() - 2, R"(,"x":1)");
        CHECK_THROWS_AS(load_corpus(temp_file("extra.jsonl", extra), "t2016"), std::invalid_argument);
        auto neg = comment_line("a", "s1");
        neg.replace(neg.find("\"top_level_replies\":1"), 21, "\"top_level_replies\":-1");
        CHECK_THROWS_AS(load_corpus(temp_file("neg.jsonl", neg), "t2016"), std::invalid_argument);
    }
    SUBCASE("unknown stratum") {
        Stratum s{"s1", "S1", "general content", 3, 100, 10, "t2016"};
        std::vector<Stratum> strata{s};
        const auto path = temp_file("unknown.jsonl", comment_line("a", "s9"));
        CHECK_THROWS_WITH_AS(load_corpus(path, "t2016", strata), doctest::Contains("unknown stratum_id 's9'"),
                             std::invalid_argument);
    }
    SUBCASE("period mismatch and population overflow") {
        const auto path = temp_file("period.jsonl", comment_line("a", "s1", "online", "x", "t2020"));
        CHECK_THROWS_AS(load_corpus(path, "t2016"), std::invalid_argument);
        Stratum s{"s1", "S1", "general content", 3, 1, 10, "t2016"};
        std::vector<Stratum> strata{s};
        const auto two = temp_file("two.jsonl", comment_line("a", "s1") + comment_line("b", "s1"));
        CHECK_THROWS_WITH_AS(load_corpus(two, "t2016", strata), doctest::Contains("population_online"),
                             std::invalid_argument);
    }
}

TEST_CASE("per-stratum counts agree with an independent line count") {
    std::string content;
    Rng rng(9);
    for (int s = 0; s < 5; ++s)
        for (int i = 0; i < 1000; ++i)
            content += comment_line("c" + std::to_string(s) + "_" + std::to_string(i),
                                    "s" + std::to_string(s), rng.bernoulli(0.2) ? "moderated" : "online");
    const auto path = temp_file("five.jsonl", content);
    const auto corpus = load_corpus(path, "t2016");
    for (int s = 0; s < 5; ++s) {
        const std::string needle = "\"stratum_id\":\"s" + std::to_string(s) + "\"";
        std::size_t lines = 0;
        for (auto pos = content.find(needle); pos != std::string::npos; pos = content.find(needle, pos + 1))
            ++lines;
        CHECK(lines == 1000);
        CHECK(corpus.counts.at("s" + std::to_string(s)).total() == static_cast<std::int64_t>(lines));
    }
}

TEST_CASE("serialize round-trips bit-exactly") {
    std::string content = comment_line("a", "s1") +
                          comment_line("b\\\"q", "s2", "author_deleted", "line\\nbreak \\u00e9 caf\xc3\xa9");
    const auto path = temp_file("rt.jsonl", content);
    const auto corpus = load_corpus(path, "t2016");
    const auto out = fs::temp_directory_path() / "normwatch_test_corpus" / "rt_out.jsonl";
    write_corpus(out, corpus.comments);
    const auto reread = load_corpus(out, "t2016");
    write_corpus(out.string() + "2", reread.comments);
    CHECK(read_file(out) == read_file(out.string() + "2"));
    CHECK(reread.comments[1].body == corpus.comments[1].body);

    Stratum s{"s1", "Some Name", "politics", 12, 5296900, 40000, "t2016"};
    CHECK(serialize(parse_stratum(serialize(s))) == serialize(s));
}

TEST_CASE("sample_study_set") {
    Corpus corpus = make_corpus(50, 800, "big");
    const auto small = make_corpus(5, 30, "small");
    for (auto c : small.comments) {
        corpus.index.emplace(c.id, corpus.comments.size());
        corpus.comments.push_back(c);
    }
    SUBCASE("takes min(per_stratum, online size) and only online comments") {
        const auto sample = sample_study_set(corpus, 100, 1);
        std::size_t big = 0, small_n = 0;
        std::set<std::string> ids;
        for (const auto& c : sample) {
            CHECK(c.moderation_status == ModerationStatus::online);
            (c.stratum_id == "big" ? big : small_n) += 1;
            ids.insert(c.id);
        }
        CHECK(big == 100);
        CHECK(small_n == 30);
        CHECK(ids.size() == sample.size());
    }
    SUBCASE("same seed gives the same selection") {
        const auto a = sample_study_set(corpus, 100, 5);
        const auto b = sample_study_set(corpus, 100, 5);
        const auto c = sample_study_set(corpus, 100, 6);
        REQUIRE(a.size() == b.size());
        bool same = true, differs = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            same &= a[i].id == b[i].id;
            differs |= a[i].id != c[i].id;
        }
        CHECK(same);
        CHECK(differs);
    }
    SUBCASE("zero per_stratum is an error") { CHECK_THROWS_AS(sample_study_set(corpus, 0, 1), std::invalid_argument); }
}

TEST_CASE("build_balanced_training_set") {
    SUBCASE("1000 + 1000 splits 1400/300/300") {
        const auto corpus = make_corpus(1000, 1000);
        const auto s = build_balanced_training_set(corpus, "s1", 1);
        CHECK(s.train.size() == 1400);
        CHECK(s.validation.size() == 300);
        CHECK(s.test.size() == 300);
    }
    SUBCASE("10 + 10 gives a 7/7 training split") {
        const auto corpus = make_corpus(10, 10);
        const auto s = build_balanced_training_set(corpus, "s1", 1);
        CHECK(s.train.size() == 14);
        CHECK(std::count_if(s.train.begin(), s.train.end(), [](const auto& x) { return x.moderated; }) == 7);
    }
    SUBCASE("majority class is downsampled; splits are balanced, disjoint and drawn from input") {
        const auto corpus = make_corpus(100, 900);
        const auto s = build_balanced_training_set(corpus, "s1", 4);
        std::set<std::string> seen;
        std::size_t total = 0;
        for (const auto* split : {&s.train, &s.validation, &s.test}) {
            const auto mod = std::count_if(split->begin(), split->end(), [](const auto& x) { return x.moderated; });
            CHECK(static_cast<std::size_t>(mod) * 2 == split->size());
            for (const auto& x : *split) {
                CHECK(seen.insert(x.comment_id).second);
                CHECK(corpus.find(x.comment_id) != nullptr);
            }
            total += split->size();
        }
        CHECK(total == 200);
    }
    SUBCASE("missing class names the stratum and class") {
        const auto corpus = make_corpus(0, 10);
        CHECK_THROWS_WITH_AS(build_balanced_training_set(corpus, "s1", 1),
                             doctest::Contains("stratum 's1' has no moderated comments"), std::invalid_argument);
    }
    SUBCASE("deterministic per seed") {
        const auto corpus = make_corpus(40, 60);
        const auto a = build_balanced_training_set(corpus, "s1", 8);
        const auto b = build_balanced_training_set(corpus, "s1", 8);
        REQUIRE(a.train.size() == b.train.size());
        for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].comment_id == b.train[i].comment_id);
    }
}
