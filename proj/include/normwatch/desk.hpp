#pragma once

// Desk-scale demo data: a small two-period corpus with hidden violation
// labels, the gold file for annotator training, a lexicon and a run config.
// Everything is a pure function of the seed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "normwatch/annotation.hpp"
#include "normwatch/corpus.hpp"

namespace normwatch {

struct DeskFixtureParams {
    std::vector<std::string> periods{"t2016", "t2020"};
    int comments_per_stratum = 1000;  // per period
    // Online violation rate before topic scaling, one entry per period.
    std::vector<double> base_rate{0.0625, 0.0428};
    double moderated_share = 0.30;
    double moderated_violation_rate = 0.55;
    double score_gap = 3.0;  // violating comments score this much lower on average
};

struct DeskFixture {
    std::vector<Stratum> strata;                       // one row per (stratum, period)
    std::map<std::string, std::vector<Comment>> corpus;  // period -> comments
    std::map<std::string, CategorySet> truth;          // comment id -> hidden labels
    CampaignSpec gold;                                 // intro and training items only
    std::string lexicon;                               // word,score lines
};

DeskFixture make_desk_fixture(const DeskFixtureParams& params, std::uint64_t seed);

// Writes strata.jsonl, corpus_<period>.jsonl, truth.csv, gold.jsonl,
// lexicon.csv and desk.json (a run config pointing at those files).
void write_desk_fixture(const std::filesystem::path& dir, const DeskFixture& fixture, std::uint64_t seed);

// truth.csv: comment_id,categories.
std::map<std::string, CategorySet> load_truth(const std::filesystem::path& path);

}  // namespace normwatch
