#pragma once

// End-to-end orchestration behind the `normwatch` command: run configuration,
// one function per stage, and the combined report. Stages read and write a
// fixed layout under the output directory (see README.md), so each can be
// rerun on its own. Every randomized stage draws from the configured seed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "normwatch/classifier.hpp"

namespace normwatch {

// Bad configuration or missing inputs; reported before a stage writes anything.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RunConfig {
    std::filesystem::path base;  // relative paths resolve against this directory
    std::uint64_t seed = 0;
    std::vector<std::string> periods;
    std::string train_period;

    std::map<std::string, std::filesystem::path> corpus;  // period -> corpus file
    std::filesystem::path strata;
    std::filesystem::path gold;
    std::filesystem::path truth;
    std::filesystem::path lexicon;
    std::filesystem::path output;
    std::filesystem::path models;    // defaults to output/models
    std::filesystem::path evidence;  // defaults to output/evidence; one subdirectory per period

    bool grid = false;
    HyperParams hyperparams;
    std::string only_stratum;  // train a single stratum when non-empty

    int threshold = kDefaultFlagThreshold;
    std::int64_t study_sample = 5000;

    int annotated_per_stratum = 32;
    int pool_size = 1000;
    int moderated_sample = 0;
    double annotator_accuracy = 0.9;
    int annotators_per_wave = 5;

    int iterations = 1000;
    double ci_level = 0.95;
    double ablation_fraction = 1.0;
    bool reference_simulation = false;
    bool write_samples = false;
    int threads = 0;

    int permutations = 10000;
};

// Reads a JSON run config. Relative paths resolve against the file's directory.
RunConfig load_config(const std::filesystem::path& file);
RunConfig parse_config(const std::string& text, const std::filesystem::path& base);

// Fills derived locations and checks value ranges. Throws ValidationError.
void finalize(RunConfig& config);

// Every setting that affects results, as canonical JSON. Output locations are
// excluded so reruns into another directory stay byte-identical.
std::string canonical_config(const RunConfig& config);
// 16 hex digits of FNV-1a over canonical_config.
std::string config_hash(const RunConfig& config);

// Seed for one named stage, independent of every other stage's seed.
std::uint64_t stage_seed(std::uint64_t seed, std::initializer_list<std::string_view> labels);

std::filesystem::path evidence_dir(const RunConfig& config, const std::string& period);
std::filesystem::path campaign_dir(const RunConfig& config, const std::string& period);

// Report sections in the order cmd_report assembles them.
const std::vector<std::string>& report_sections();

void cmd_train(const RunConfig& config);
void cmd_flag(const RunConfig& config);
// `force` discards an existing event log in the campaign directory.
void cmd_campaign_init(const RunConfig& config, bool force);
void cmd_campaign_simulate(const RunConfig& config, bool force);
void cmd_campaign_export(const RunConfig& config, bool partial);
void cmd_estimate(const RunConfig& config);
// Estimates one evidence directory into out_dir (the `--evidence` form).
void estimate_evidence(const RunConfig& config, const std::filesystem::path& evidence,
                       const std::filesystem::path& out_dir, const std::string& label);
void cmd_regress(const RunConfig& config);
void cmd_compare(const RunConfig& config);
void cmd_report(const RunConfig& config);

// train, flag, campaign init and simulate, estimate, regress, compare, report.
void run_pipeline(const RunConfig& config);

}  // namespace normwatch
