#include "normwatch/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "normwatch/annotation.hpp"
#include "normwatch/bootstrap.hpp"
#include "normwatch/corpus.hpp"
#include "normwatch/desk.hpp"
#include "normwatch/rng.hpp"
#include "normwatch/stats.hpp"
#include "normwatch/textio.hpp"

namespace normwatch {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Fixed start of the scripted campaign clock, so event logs are reproducible.
constexpr std::int64_t kSimulationStart = 1'700'000'000;

// ---------------------------------------------------------------------------
// Formatting

std::string pct(double rate) { return format_fixed(100.0 * rate, 2); }

std::string estimate_text(const BootstrapEstimate& e) {
    return pct(e.median) + "% [" + pct(e.ci_low) + ", " + pct(e.ci_high) + "]";
}

json estimate_json(const BootstrapEstimate& e) {
    return {{"median", e.median}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}};
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
    auto line = [&](const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out += "  ";
            // First column left-aligned, numbers right-aligned.
            const std::string pad(width[c] - cells[c].size(), ' ');
            out += c == 0 ? cells[c] + pad : pad + cells[c];
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out + "\n";
    };
    std::string out = line(header);
    std::size_t total = 0;
    for (auto w : width) total += w;
    out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    for (const auto& row : rows) out += line(row);
    return out;
}

std::string section_header(const RunConfig& config, const std::string& title) {
    return "== " + title + " ==\nconfig " + config_hash(config) + "  seed " + std::to_string(config.seed) + "\n\n";
}

void write_json(const fs::path& path, const json& value) { write_file(path, value.dump(2) + "\n"); }

json provenance(const RunConfig& config) { return {{"config_hash", config_hash(config)}, {"seed", config.seed}}; }

// ---------------------------------------------------------------------------
// Validation helpers

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw ValidationError("missing " + what + ": " + path.string());
}

void require_dir(const fs::path& path, const std::string& what) {
    if (!fs::is_directory(path)) throw ValidationError("missing " + what + ": " + path.string());
}

const fs::path& corpus_for(const RunConfig& config, const std::string& period) {
    auto it = config.corpus.find(period);
    if (it == config.corpus.end()) throw ValidationError("no corpus configured for period " + period);
    return it->second;
}

void write_config_copy(const RunConfig& config) {
    fs::create_directories(config.output);
    write_file(config.output / "config.json", canonical_config(config));
}

std::vector<Stratum> strata_for(const std::vector<Stratum>& all, const std::string& period) {
    std::vector<Stratum> out;
    for (const auto& s : all)
        if (s.period == period) out.push_back(s);
    std::sort(out.begin(), out.end(), [](const Stratum& a, const Stratum& b) { return a.stratum_id < b.stratum_id; });
    return out;
}

Corpus load_period(const RunConfig& config, const std::vector<Stratum>& strata, const std::string& period) {
    const auto declared = strata_for(strata, period);
    return load_corpus(corpus_for(config, period), period, declared);
}

// Uniform subset of size min(k, n), returned in input order.
template <typename T>
std::vector<T> choose(const std::vector<T>& items, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(items.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, idx.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    std::vector<T> out;
    out.reserve(k);
    for (auto i : idx) out.push_back(items[i]);
    return out;
}

struct ScoreRow {
    std::string comment_id;
    std::string stratum_id;
    int agreement = 0;
    bool flagged = false;
};

fs::path flag_dir(const RunConfig& config, const std::string& period) { return config.output / "flag" / period; }
fs::path estimate_dir(const RunConfig& config, const std::string& period) {
    return config.output / "estimate" / period;
}

std::vector<ScoreRow> read_scores(const fs::path& path) {
    const auto table = read_csv(path);
    const auto c_id = table.column("comment_id");
    const auto c_s = table.column("stratum_id");
    const auto c_a = table.column("agreement");
    const auto c_f = table.column("flagged");
    std::vector<ScoreRow> out;
    for (const auto& row : table.rows)
        out.push_back({row.at(c_id), row.at(c_s), static_cast<int>(parse_int(row.at(c_a))), row.at(c_f) == "1"});
    return out;
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

BootstrapConfig bootstrap_config(const RunConfig& config, std::uint64_t seed) {
    BootstrapConfig bc;
    bc.iterations = config.iterations;
    bc.seed = seed;
    bc.ci_level = config.ci_level;
    bc.flag_threshold = config.threshold;
    bc.threads = config.threads;
    bc.reference_simulation = config.reference_simulation;
    return bc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

RunConfig load_config(const fs::path& file) {
    require_file(file, "config file");
    return parse_config(read_file(file), file.parent_path());
}

RunConfig parse_config(const std::string& text, const fs::path& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    RunConfig c;
    c.base = base;
    try {
        c.seed = j.value("seed", std::uint64_t{0});
        c.periods = j.value("periods", std::vector<std::string>{});
        c.train_period = j.value("train_period", c.periods.empty() ? std::string() : c.periods.front());
        const json paths = j.value("paths", json::object());
        auto path = [&](const char* key) {
            return paths.contains(key) ? base / paths.at(key).get<std::string>() : fs::path();
        };
        if (paths.contains("corpus")) {
            for (const auto& [period, p] : paths.at("corpus").items()) c.corpus[period] = base / p.get<std::string>();
        }
        c.strata = path("strata");
        c.gold = path("gold");
        c.truth = path("truth");
        c.lexicon = path("lexicon");
        c.output = path("output");
        c.models = path("models");
        c.evidence = path("evidence");

        const json train = j.value("train", json::object());
        c.grid = train.value("grid", false);
        const json hp = train.value("hyperparams", json::object());
        c.hyperparams.vocab_size = hp.value("vocab_size", c.hyperparams.vocab_size);
        c.hyperparams.max_len = hp.value("max_len", c.hyperparams.max_len);
        c.hyperparams.epochs = hp.value("epochs", c.hyperparams.epochs);
        c.hyperparams.relu_nodes = hp.value("relu_nodes", c.hyperparams.relu_nodes);
        c.hyperparams.embedding_dim = hp.value("embedding_dim", c.hyperparams.embedding_dim);
        c.hyperparams.learning_rate = hp.value("learning_rate", c.hyperparams.learning_rate);
        c.hyperparams.batch_size = hp.value("batch_size", c.hyperparams.batch_size);

        const json flag = j.value("flag", json::object());
        c.threshold = flag.value("threshold", c.threshold);
        c.study_sample = flag.value("study_sample", c.study_sample);

        const json campaign = j.value("campaign", json::object());
        c.annotated_per_stratum = campaign.value("annotated_per_stratum", c.annotated_per_stratum);
        c.pool_size = campaign.value("pool_size", c.pool_size);
        c.moderated_sample = campaign.value("moderated_sample", c.moderated_sample);
        c.annotator_accuracy = campaign.value("annotator_accuracy", c.annotator_accuracy);
        c.annotators_per_wave = campaign.value("annotators_per_wave", c.annotators_per_wave);

        const json estimate = j.value("estimate", json::object());
        c.iterations = estimate.value("iterations", c.iterations);
        c.ci_level = estimate.value("ci_level", c.ci_level);
        c.ablation_fraction = estimate.value("ablate", c.ablation_fraction);
        c.reference_simulation = estimate.value("reference_sim", c.reference_simulation);
        c.write_samples = estimate.value("samples", c.write_samples);
        c.threads = estimate.value("threads", c.threads);

        const json compare = j.value("compare", json::object());
        c.permutations = compare.value("permutations", c.permutations);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config field has the wrong type: ") + e.what());
    }
    return c;
}

void finalize(RunConfig& c) {
    if (c.output.empty()) c.output = c.base / "out";
    if (c.models.empty()) c.models = c.output / "models";
    if (c.evidence.empty()) c.evidence = c.output / "evidence";
    if (c.train_period.empty() && !c.periods.empty()) c.train_period = c.periods.front();
    std::set<std::string> seen;
    for (const auto& p : c.periods)
        if (p.empty() || !seen.insert(p).second) throw ValidationError("periods must be unique and non-empty");
    auto positive = [](auto value, const char* name) {
        if (value < 1) throw ValidationError(std::string(name) + " must be positive");
    };
    positive(c.threshold, "flag.threshold");
    positive(c.study_sample, "flag.study_sample");
    positive(c.iterations, "estimate.iterations");
    positive(c.permutations, "compare.permutations");
    positive(c.annotators_per_wave, "campaign.annotators_per_wave");
    if (c.annotated_per_stratum < 0 || c.pool_size < 1 || c.moderated_sample < 0)
        throw ValidationError("campaign sizes out of range");
    if (!(c.ci_level > 0.0 && c.ci_level < 1.0)) throw ValidationError("estimate.ci_level must lie in (0, 1)");
    if (!(c.ablation_fraction > 0.0 && c.ablation_fraction <= 1.0))
        throw ValidationError("estimate.ablate must lie in (0, 1]");
    if (!(c.annotator_accuracy >= 0.0 && c.annotator_accuracy <= 1.0))
        throw ValidationError("campaign.annotator_accuracy must lie in [0, 1]");
    if (c.threads < 0) throw ValidationError("estimate.threads must be non-negative");
}

std::string canonical_config(const RunConfig& c) {
    auto rel = [&](const fs::path& p) { return p.empty() ? std::string() : p.lexically_relative(c.base).generic_string(); };
    json corpus = json::object();
    for (const auto& [period, p] : c.corpus) corpus[period] = rel(p);
    const auto& hp = c.hyperparams;
    json j{
        {"seed", c.seed},
        {"periods", c.periods},
        {"train_period", c.train_period},
        {"paths",
         {{"corpus", corpus},
          {"strata", rel(c.strata)},
          {"gold", rel(c.gold)},
          {"truth", rel(c.truth)},
          {"lexicon", rel(c.lexicon)}}},
        {"train",
         {{"grid", c.grid},
          {"only_stratum", c.only_stratum},
          {"hyperparams",
           {{"vocab_size", hp.vocab_size},
            {"max_len", hp.max_len},
            {"epochs", hp.epochs},
            {"relu_nodes", hp.relu_nodes},
            {"embedding_dim", hp.embedding_dim},
            {"learning_rate", hp.learning_rate},
            {"batch_size", hp.batch_size}}}}},
        {"flag", {{"threshold", c.threshold}, {"study_sample", c.study_sample}}},
        {"campaign",
         {{"annotated_per_stratum", c.annotated_per_stratum},
          {"pool_size", c.pool_size},
          {"moderated_sample", c.moderated_sample},
          {"annotator_accuracy", c.annotator_accuracy},
          {"annotators_per_wave", c.annotators_per_wave}}},
        {"estimate",
         {{"iterations", c.iterations},
          {"ci_level", c.ci_level},
          {"ablate", c.ablation_fraction},
          {"reference_sim", c.reference_simulation},
          {"samples", c.write_samples}}},
        {"compare", {{"permutations", c.permutations}}},
        {"rng", Rng::kName},
    };
    return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(stable_hash(canonical_config(config))));
    return buf;
}

std::uint64_t stage_seed(std::uint64_t seed, std::initializer_list<std::string_view> labels) {
    std::uint64_t key = 0;
    for (auto l : labels) key = key * 0x100000001b3ULL ^ stable_hash(l);
    return Rng::stream(seed, {stable_hash("stage"), key}).next();
}

fs::path evidence_dir(const RunConfig& config, const std::string& period) { return config.evidence / period; }
fs::path campaign_dir(const RunConfig& config, const std::string& period) {
    return config.output / "campaign" / period;
}

const std::vector<std::string>& report_sections() {
    static const std::vector<std::string> sections{"train", "flag", "campaign", "estimate", "regress", "compare"};
    return sections;
}

// ---------------------------------------------------------------------------
// train

void cmd_train(const RunConfig& config) {
    require_file(corpus_for(config, config.train_period), "training corpus");
    if (!config.strata.empty()) require_file(config.strata, "strata file");
    const auto strata = config.strata.empty() ? std::vector<Stratum>{} : load_strata(config.strata);
    const auto corpus = load_period(config, strata, config.train_period);
    auto ids = corpus.stratum_ids();
    if (!config.only_stratum.empty()) {
        if (std::find(ids.begin(), ids.end(), config.only_stratum) == ids.end())
            throw ValidationError("stratum " + config.only_stratum + " is not in the training corpus");
        ids = {config.only_stratum};
    }
    if (ids.empty()) throw ValidationError("training corpus has no strata");

    write_config_copy(config);
    fs::create_directories(config.models);
    fs::create_directories(config.output / "train");
    std::string csv = "stratum_id,train,validation,test,validation_f1,test_precision,test_recall,test_f1,hyperparams\n";
    std::vector<std::vector<std::string>> rows;
    json out = provenance(config);
    out["strata"] = json::array();
    for (const auto& s : ids) {
        const auto splits = build_balanced_training_set(corpus, s, stage_seed(config.seed, {"split", s}));
        if (splits.train.empty() || splits.validation.empty())
            throw ValidationError("stratum " + s + " has too few moderated or online comments to train");
        StratumClassifier model;
        json cells = json::array();
        if (config.grid) {
            auto result = grid_search(s, splits.train, splits.validation, CandidateGrid{},
                                      stage_seed(config.seed, {"train", s}));
            for (const auto& cell : result.cells)
                cells.push_back({{"hyperparams", to_string(cell.hyperparams)}, {"validation_f1", cell.validation_f1}});
            model = std::move(result.model);
        } else {
            const auto vocab = VocabIndex::build(splits.train, config.hyperparams.vocab_size);
            const auto train_set = encode_all(vocab, splits.train, config.hyperparams.max_len);
            const auto val_set = encode_all(vocab, splits.validation, config.hyperparams.max_len);
            model = train(s, vocab, train_set, val_set, config.hyperparams, stage_seed(config.seed, {"train", s}));
        }
        const auto test = encode_all(model.vocab, splits.test, model.hyperparams.max_len);
        const auto m = evaluate(model, test);
        save_model(config.models / (s + ".model"), model);
        const auto hp = to_string(model.hyperparams);
        csv += s + "," + std::to_string(splits.train.size()) + "," + std::to_string(splits.validation.size()) + "," +
               std::to_string(splits.test.size()) + "," + format_double(model.validation_f1) + "," +
               format_double(m.precision) + "," + format_double(m.recall) + "," + format_double(m.f1) + "," + hp + "\n";
        rows.push_back({s, std::to_string(splits.train.size()), std::to_string(splits.test.size()),
                        format_fixed(model.validation_f1, 3), format_fixed(m.precision, 3), format_fixed(m.recall, 3),
                        format_fixed(m.f1, 3)});
        json entry{{"stratum_id", s},
                   {"train", splits.train.size()},
                   {"validation", splits.validation.size()},
                   {"test", splits.test.size()},
                   {"validation_f1", model.validation_f1},
                   {"test", {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}}},
                   {"hyperparams", hp}};
        if (config.grid) entry["grid"] = cells;
        out["strata"].push_back(entry);
    }
    write_file(config.output / "train" / "metrics.csv", csv);
    write_json(config.output / "train" / "train.json", out);
    std::string text = section_header(config, "Classifiers");
    text += "Per-stratum removal classifiers, balanced moderated/online splits (70/15/15).\n\n";
    text += render_table({"stratum", "train", "test", "val F1", "precision", "recall", "F1"}, rows);
    write_file(config.output / "train" / "report.txt", text);
}

// ---------------------------------------------------------------------------
// flag

void cmd_flag(const RunConfig& config) {
    require_dir(config.models, "model directory");
    require_file(config.strata, "strata file");
    for (const auto& p : config.periods) require_file(corpus_for(config, p), "corpus for " + p);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(config.models))
        if (entry.path().extension() == ".model") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no .model files in " + config.models.string());
    const int ensemble = static_cast<int>(files.size());
    if (config.threshold > ensemble)
        throw ValidationError("flag threshold " + std::to_string(config.threshold) + " exceeds ensemble size " +
                              std::to_string(ensemble));
    std::vector<StratumClassifier> models;
    for (const auto& f : files) models.push_back(load_model(f));
    const auto strata = load_strata(config.strata);

    write_config_copy(config);
    json out = provenance(config);
    out["ensemble_size"] = ensemble;
    out["threshold"] = config.threshold;
    out["periods"] = json::object();
    std::string text = section_header(config, "Flagging");
    text += "Ensemble of " + std::to_string(ensemble) + " classifiers; flagged when agreement >= " +
            std::to_string(config.threshold) + ".\n";
    for (const auto& period : config.periods) {
        const auto corpus = load_period(config, strata, period);
        const auto study = sample_study_set(corpus, config.study_sample, stage_seed(config.seed, {"study", period}));
        std::vector<ScoreRow> scores(study.size());
        for (std::size_t i = 0; i < study.size(); ++i) {
            const int a = agreement_score(models, study[i].body);
            scores[i] = {study[i].id, study[i].stratum_id, a, flag(a, ensemble, config.threshold)};
        }
        std::map<std::string, std::pair<std::int64_t, std::int64_t>> per;  // stratum -> (n, flagged)
        std::map<std::string, std::vector<std::int64_t>> hist;
        std::string csv = "comment_id,stratum_id,agreement,flagged\n";
        for (const auto& r : scores) {
            csv += r.comment_id + "," + r.stratum_id + "," + std::to_string(r.agreement) + "," + (r.flagged ? "1" : "0") +
                   "\n";
            auto& [n, k] = per[r.stratum_id];
            ++n;
            k += r.flagged ? 1 : 0;
            auto& h = hist[r.stratum_id];
            h.resize(static_cast<std::size_t>(ensemble) + 1, 0);
            ++h[static_cast<std::size_t>(r.agreement)];
        }
        const auto dir = flag_dir(config, period);
        fs::create_directories(dir);
        write_file(dir / "scores.csv", csv);
        std::string hcsv = "stratum_id,agreement,count\n";
        for (const auto& [s, h] : hist)
            for (std::size_t a = 0; a < h.size(); ++a) hcsv += s + "," + std::to_string(a) + "," + std::to_string(h[a]) + "\n";
        write_file(dir / "histogram.csv", hcsv);

        std::string sample = "stratum_id,population_online,population_moderated,sample_size,flagged\n";
        std::vector<std::vector<std::string>> rows;
        json period_json = json::array();
        for (const auto& s : strata_for(strata, period)) {
            auto it = per.find(s.stratum_id);
            if (it == per.end()) continue;
            const auto [n, k] = it->second;
            sample += s.stratum_id + "," + std::to_string(s.population_online) + "," +
                      std::to_string(s.population_moderated) + "," + std::to_string(n) + "," + std::to_string(k) + "\n";
            std::string h;
            for (auto v : hist[s.stratum_id]) h += (h.empty() ? "" : " ") + std::to_string(v);
            rows.push_back({s.stratum_id, std::to_string(n), std::to_string(k),
                            pct(static_cast<double>(k) / static_cast<double>(n)) + "%", h});
            period_json.push_back({{"stratum_id", s.stratum_id},
                                   {"sample_size", n},
                                   {"flagged", k},
                                   {"agreement_histogram", hist[s.stratum_id]}});
        }
        fs::create_directories(evidence_dir(config, period));
        write_file(evidence_dir(config, period) / "sample.csv", sample);
        out["periods"][period] = period_json;
        text += "\nPeriod " + period + "\n";
        text += render_table({"stratum", "sample", "flagged", "flag rate", "agreement histogram 0.." + std::to_string(ensemble)},
                             rows);
    }
    fs::create_directories(config.output / "flag");
    write_json(config.output / "flag" / "flag.json", out);
    write_file(config.output / "flag" / "report.txt", text);
}

// ---------------------------------------------------------------------------
// campaign

void cmd_campaign_init(const RunConfig& config, bool force) {
    require_file(config.gold, "gold file");
    require_file(config.strata, "strata file");
    for (const auto& p : config.periods) {
        require_file(corpus_for(config, p), "corpus for " + p);
        require_file(flag_dir(config, p) / "scores.csv", "flag scores for " + p + " (run `normwatch flag`)");
        const auto log = campaign_dir(config, p) / "events.jsonl";
        if (!force && fs::exists(log) && fs::file_size(log) > 0)
            throw ValidationError(log.string() + " already holds annotations; pass --force to discard them");
    }
    const auto strata = load_strata(config.strata);
    CampaignSpec gold;
    load_gold(config.gold, gold);

    write_config_copy(config);
    for (const auto& period : config.periods) {
        const auto corpus = load_period(config, strata, period);
        const auto scores = read_scores(flag_dir(config, period) / "scores.csv");
        CampaignSpec spec = gold;
        std::map<std::string, std::vector<std::string>> flagged_by_stratum;
        std::vector<std::string> unflagged;
        for (const auto& r : scores) {
            if (r.flagged) flagged_by_stratum[r.stratum_id].push_back(r.comment_id);
            else unflagged.push_back(r.comment_id);
        }
        auto add = [&](const std::string& id, TaskPool pool) {
            const Comment* c = corpus.find(id);
            if (!c) throw std::runtime_error("scores.csv names " + id + ", which is not in the " + period + " corpus");
            spec.tasks.push_back({c->id, c->stratum_id, c->body, pool});
        };
        for (const auto& [s, ids] : flagged_by_stratum) {
            Rng rng = Rng::stream(stage_seed(config.seed, {"campaign", period}), {stable_hash("flagged"), stable_hash(s)});
            for (const auto& id : choose(ids, static_cast<std::size_t>(config.annotated_per_stratum), rng))
                add(id, TaskPool::flagged);
        }
        Rng pool_rng = Rng::stream(stage_seed(config.seed, {"campaign", period}), {stable_hash("pool")});
        for (const auto& id : choose(unflagged, static_cast<std::size_t>(config.pool_size), pool_rng))
            add(id, TaskPool::unflagged);
        if (config.moderated_sample > 0) {
            std::vector<std::string> moderated;
            for (const auto& c : corpus.comments)
                if (c.moderation_status == ModerationStatus::moderated) moderated.push_back(c.id);
            Rng mod_rng = Rng::stream(stage_seed(config.seed, {"campaign", period}), {stable_hash("moderated")});
            for (const auto& id : choose(moderated, static_cast<std::size_t>(config.moderated_sample), mod_rng))
                add(id, TaskPool::moderated);
        }
        validate(spec);
        const auto dir = campaign_dir(config, period);
        fs::create_directories(dir);
        write_campaign(dir, spec);
        fs::remove(dir / "events.jsonl");
    }
}

void cmd_campaign_simulate(const RunConfig& config, bool force) {
    require_file(config.truth, "truth file");
    for (const auto& p : config.periods) {
        require_file(campaign_dir(config, p) / "tasks.jsonl", "campaign for " + p + " (run `normwatch campaign init`)");
        const auto log = campaign_dir(config, p) / "events.jsonl";
        if (!force && fs::exists(log) && fs::file_size(log) > 0)
            throw ValidationError(log.string() + " already holds annotations; pass --force to discard them");
    }
    const auto truth = load_truth(config.truth);
    write_config_copy(config);
    json out = provenance(config);
    std::string text = section_header(config, "Annotation campaign");
    text += "Scripted annotators answer correctly with probability " + format_fixed(config.annotator_accuracy, 2) +
            "; three records per comment, majority consensus.\n\n";
    std::vector<std::vector<std::string>> rows;
    for (const auto& period : config.periods) {
        const auto dir = campaign_dir(config, period);
        const auto spec = load_campaign(dir);
        fs::remove(dir / "events.jsonl");
        CampaignOptions options;
        options.seed = stage_seed(config.seed, {"assign", period});
        Campaign campaign(spec, options, dir / "events.jsonl");
        const auto summary = simulate_annotators(campaign, truth, config.annotators_per_wave, config.annotator_accuracy,
                                                 stage_seed(config.seed, {"annotators", period}), kSimulationStart);
        const auto result = export_campaign(campaign, false);
        fs::create_directories(evidence_dir(config, period));
        write_export(evidence_dir(config, period), result);
        std::size_t violating = 0;
        for (const auto* group : {&result.flagged, &result.unflagged, &result.moderated})
            for (const auto& a : *group) violating += a.violating ? 1 : 0;
        rows.push_back({period, std::to_string(spec.tasks.size()), std::to_string(summary.annotators),
                        std::to_string(summary.qualified), std::to_string(summary.rejected),
                        std::to_string(summary.records), std::to_string(violating),
                        std::to_string(result.fallback_ids.size())});
        out[period] = {{"comments", spec.tasks.size()},
                       {"flagged", result.flagged.size()},
                       {"unflagged", result.unflagged.size()},
                       {"moderated", result.moderated.size()},
                       {"annotators", summary.annotators},
                       {"qualified", summary.qualified},
                       {"rejected", summary.rejected},
                       {"records", summary.records},
                       {"violating", violating},
                       {"fallback", result.fallback_ids.size()}};
    }
    text += render_table({"period", "comments", "annotators", "qualified", "rejected", "records", "violating", "fallback"},
                         rows);
    fs::create_directories(config.output / "campaign");
    write_json(config.output / "campaign" / "campaign.json", out);
    write_file(config.output / "campaign" / "report.txt", text);
}

void cmd_campaign_export(const RunConfig& config, bool partial) {
    for (const auto& p : config.periods) require_file(campaign_dir(config, p) / "tasks.jsonl", "campaign for " + p);
    for (const auto& period : config.periods) {
        const auto dir = campaign_dir(config, period);
        Campaign campaign(load_campaign(dir), CampaignOptions{}, dir / "events.jsonl");
        CampaignExport result;
        try {
            result = export_campaign(campaign, partial);
        } catch (const std::invalid_argument& e) {
            throw ValidationError(period + ": " + e.what() + " (pass --partial to export closed comments only)");
        }
        fs::create_directories(evidence_dir(config, period));
        write_export(evidence_dir(config, period), result);
    }
}

// ---------------------------------------------------------------------------
// estimate

void estimate_evidence(const RunConfig& config, const fs::path& evidence, const fs::path& out_dir,
                       const std::string& label) {
    require_file(evidence / "sample.csv", "classified sample (sample.csv)");
    require_file(evidence / "flagged.csv", "flagged annotations (flagged.csv)");
    require_file(evidence / "unflagged.csv", "false-negative annotations (unflagged.csv)");
    const auto ev = load_evidence(evidence);
    const std::uint64_t seed = stage_seed(config.seed, {"estimate", label});
    const auto bc = bootstrap_config(config, seed);
    const auto result = run(bc, ev.strata, ev.pool);

    json out = provenance(config);
    out["label"] = label;
    out["iterations"] = config.iterations;
    out["ci_level"] = config.ci_level;
    out["overall"] = estimate_json(result.overall);
    out["per_stratum"] = json::array();
    std::string text = "-- " + label + " --\n";
    text += "Overall violation rate: " + estimate_text(result.overall) + " (" + std::to_string(config.iterations) +
            " bootstrap iterations, " + format_fixed(100.0 * config.ci_level, 0) + "% percentile interval)\n\n";

    std::vector<std::vector<std::string>> rows;
    for (std::size_t s = 0; s < result.stratum_ids.size(); ++s) {
        const auto& e = result.per_stratum[s];
        const auto& evs = ev.strata[s];
        rows.push_back({result.stratum_ids[s], std::to_string(result.populations[s]),
                        pct(static_cast<double>(evs.sample_flagged) / static_cast<double>(std::max<std::int64_t>(1, evs.sample_size))) + "%",
                        std::to_string(evs.annotated_flagged.size()), pct(e.median) + "%", pct(e.ci_low) + "%",
                        pct(e.ci_high) + "%"});
        out["per_stratum"].push_back({{"stratum_id", result.stratum_ids[s]},
                                      {"population_online", result.populations[s]},
                                      {"rate", estimate_json(e)}});
    }
    text += "Per stratum\n";
    text += render_table({"stratum", "N", "flag rate", "annotated", "median", "ci low", "ci high"}, rows);

    rows.clear();
    out["categories"] = json::array();
    for (std::size_t c = 0; c < kNormCategories.size(); ++c) {
        const auto& prop = result.category_proportion[c];
        const auto& count = result.category_count[c];
        rows.push_back({std::string(to_string(kNormCategories[c])), pct(prop.median) + "%",
                        "[" + pct(prop.ci_low) + ", " + pct(prop.ci_high) + "]", format_fixed(count.median, 0),
                        "[" + format_fixed(count.ci_low, 0) + ", " + format_fixed(count.ci_high, 0) + "]"});
        out["categories"].push_back({{"category", std::string(to_string(kNormCategories[c]))},
                                     {"proportion", estimate_json(prop)},
                                     {"count", estimate_json(count)}});
    }
    text += "\nViolations by category (share of violating comments)\n";
    text += render_table({"category", "share", "ci", "count", "count ci"}, rows);

    out["moderation"] = json::array();
    text += "\nModeration rate by category\n";
    if (ev.has_moderated) {
        std::vector<CategoryCounts> online;
        online.reserve(result.iterations.size());
        for (const auto& it : result.iterations) online.push_back(it.category_counts);
        std::int64_t moderated_total = 0;
        for (const auto& s : ev.strata) moderated_total += s.population_moderated;
        const auto rates = moderation_rate_by_category(online, ev.moderated, moderated_total,
                                                       stage_seed(config.seed, {"moderated", label}), config.ci_level);
        rows.clear();
        for (std::size_t c = 0; c < kNormCategories.size(); ++c) {
            const auto& r = rates[c];
            const std::string name(to_string(kNormCategories[c]));
            rows.push_back({name, r.defined ? estimate_text(r.estimate) : "undefined",
                            std::to_string(r.excluded_iterations)});
            json entry{{"category", name}, {"defined", r.defined}, {"excluded_iterations", r.excluded_iterations}};
            if (r.defined) entry["rate"] = estimate_json(r.estimate);
            out["moderation"].push_back(entry);
        }
        text += "Moderated sample of " + std::to_string(ev.moderated.size()) + " comments, " +
                std::to_string(moderated_total) + " moderated comments in total.\n";
        text += render_table({"category", "moderated share", "excluded iterations"}, rows);
    } else {
        text += "No moderated sample (moderated.csv) in the evidence.\n";
    }

    text += "\nAnnotation ablation\n";
    if (config.ablation_fraction < 1.0) {
        const auto ablated = ablate(bc, ev.strata, ev.pool, config.ablation_fraction);
        const double full = result.overall.ci_high - result.overall.ci_low;
        const double reduced = ablated.overall.ci_high - ablated.overall.ci_low;
        out["ablation"] = {{"fraction", config.ablation_fraction},
                           {"full", estimate_json(result.overall)},
                           {"ablated", estimate_json(ablated.overall)},
                           {"full_width", full},
                           {"ablated_width", reduced}};
        text += render_table({"labels kept", "estimate", "ci width"},
                             {{"100%", estimate_text(result.overall), pct(full) + "%"},
                              {format_fixed(100.0 * config.ablation_fraction, 0) + "%", estimate_text(ablated.overall),
                               pct(reduced) + "%"}});
    } else {
        text += "Not requested.\n";
    }
    out["warnings"] = result.warnings;
    for (const auto& w : result.warnings) text += "warning: " + w + "\n";

    fs::create_directories(out_dir);
    write_json(out_dir / "estimates.json", out);
    write_file(out_dir / "report.txt", text);
    if (config.write_samples) {
        std::string csv = "iteration,overall";
        for (const auto& s : result.stratum_ids) csv += "," + s;
        csv += "\n";
        for (std::size_t i = 0; i < result.iterations.size(); ++i) {
            csv += std::to_string(i) + "," + format_double(result.iterations[i].overall_rate);
            for (double r : result.iterations[i].stratum_rate) csv += "," + format_double(r);
            csv += "\n";
        }
        write_file(out_dir / "samples.csv", csv);
    }
}

void cmd_estimate(const RunConfig& config) {
    for (const auto& p : config.periods) {
        const auto dir = evidence_dir(config, p);
        require_file(dir / "sample.csv", "classified sample for " + p);
        require_file(dir / "flagged.csv", "flagged annotations for " + p);
        require_file(dir / "unflagged.csv", "false-negative annotations for " + p);
    }
    if (config.periods.empty()) throw ValidationError("no periods configured");
    write_config_copy(config);
    std::string text = section_header(config, "Violation estimates");
    json index = provenance(config);
    index["periods"] = config.periods;
    for (const auto& p : config.periods) {
        estimate_evidence(config, evidence_dir(config, p), estimate_dir(config, p), p);
        text += read_file(estimate_dir(config, p) / "report.txt") + "\n";
    }
    write_json(config.output / "estimate" / "estimate.json", index);
    write_file(config.output / "estimate" / "report.txt", text);
}

// ---------------------------------------------------------------------------
// regress

void cmd_regress(const RunConfig& config) {
    require_file(config.strata, "strata file");
    for (const auto& p : config.periods)
        require_file(estimate_dir(config, p) / "estimates.json", "estimates for " + p + " (run `normwatch estimate`)");
    const auto strata = load_strata(config.strata);
    std::vector<RegressionRow> rows;
    for (const auto& period : config.periods) {
        const auto est = read_json(estimate_dir(config, period) / "estimates.json");
        std::map<std::string, const Stratum*> by_id;
        const auto declared = strata_for(strata, period);
        for (const auto& s : declared) by_id[s.stratum_id] = &s;
        for (const auto& entry : est.at("per_stratum")) {
            const std::string id = entry.at("stratum_id");
            auto it = by_id.find(id);
            if (it == by_id.end()) throw ValidationError("stratum " + id + " has no " + period + " row in the strata file");
            const Stratum& s = *it->second;
            rows.push_back({id + "@" + period, entry.at("rate").at("median").get<double>() * static_cast<double>(s.population_online),
                            s.population_online, s.moderator_count, s.topic_category});
        }
    }
    const auto spec = build_regression_spec(rows, kBaselineTopic);
    const auto fit = fit_poisson(spec);

    write_config_copy(config);
    json out = provenance(config);
    out["baseline_topic"] = std::string(kBaselineTopic);
    out["rows"] = rows.size();
    out["log_likelihood"] = fit.log_likelihood;
    out["converged"] = fit.converged;
    out["iterations"] = fit.iterations;
    out["coefficients"] = json::array();
    std::vector<std::vector<std::string>> table;
    for (std::size_t k = 0; k < fit.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        table.push_back({fit.names[k], format_fixed(fit.coefficients(i), 3), format_fixed(fit.standard_errors(i), 3),
                         format_fixed(fit.z_scores(i), 2), format_fixed(fit.p_values(i), 4),
                         format_fixed(irr(fit.coefficients(i)), 3)});
        out["coefficients"].push_back({{"name", fit.names[k]},
                                       {"coefficient", fit.coefficients(i)},
                                       {"standard_error", fit.standard_errors(i)},
                                       {"z", fit.z_scores(i)},
                                       {"p", fit.p_values(i)},
                                       {"irr", irr(fit.coefficients(i))}});
    }
    std::string text = section_header(config, "Poisson regression");
    text += "Response: estimated violating comments per stratum and period. Offset: log(comments).\n";
    text += "Topic baseline: " + std::string(kBaselineTopic) + ". " + std::to_string(rows.size()) + " rows, log-likelihood " +
            format_fixed(fit.log_likelihood, 2) + ", " + (fit.converged ? "converged" : "NOT converged") + " after " +
            std::to_string(fit.iterations) + " iterations.\n\n";
    text += render_table({"covariate", "coef", "SE", "z", "p", "IRR"}, table);
    fs::create_directories(config.output / "regress");
    write_json(config.output / "regress" / "regress.json", out);
    write_file(config.output / "regress" / "report.txt", text);
}

// ---------------------------------------------------------------------------
// compare

namespace {

json welch_json(const WelchResult& w, std::size_t na, std::size_t nb) {
    return {{"t", w.t}, {"df", w.df}, {"p", w.p}, {"mean_a", w.mean_a}, {"mean_b", w.mean_b}, {"n_a", na}, {"n_b", nb}};
}

std::vector<std::string> welch_row(const std::string& name, const WelchResult& w, std::size_t na, std::size_t nb) {
    return {name,
            format_fixed(w.mean_a, 2) + " (n=" + std::to_string(na) + ")",
            format_fixed(w.mean_b, 2) + " (n=" + std::to_string(nb) + ")",
            format_fixed(w.t, 2),
            format_fixed(w.df, 1),
            w.p < 1e-4 ? std::string("<0.0001") : format_fixed(w.p, 4)};
}

}  // namespace

void cmd_compare(const RunConfig& config) {
    require_file(config.strata, "strata file");
    require_file(config.lexicon, "emotionality lexicon");
    for (const auto& p : config.periods) {
        require_file(corpus_for(config, p), "corpus for " + p);
        require_file(flag_dir(config, p) / "scores.csv", "flag scores for " + p);
        require_file(evidence_dir(config, p) / "flagged.csv", "flagged annotations for " + p);
        require_file(evidence_dir(config, p) / "unflagged.csv", "false-negative annotations for " + p);
        require_file(estimate_dir(config, p) / "estimates.json", "estimates for " + p);
    }
    const auto strata = load_strata(config.strata);
    const auto lexicon = load_lexicon(config.lexicon);

    std::vector<double> score_violating, score_sample, replies_violating, replies_sample;
    std::vector<double> flesch_moderated, flesch_online, emo_moderated, emo_online;
    std::vector<std::string> text_moderated, text_online;
    for (const auto& period : config.periods) {
        const auto corpus = load_period(config, strata, period);
        for (const auto& r : read_scores(flag_dir(config, period) / "scores.csv")) {
            const Comment* c = corpus.find(r.comment_id);
            if (!c) throw std::runtime_error("scores.csv names unknown comment " + r.comment_id);
            score_sample.push_back(static_cast<double>(c->score));
            replies_sample.push_back(static_cast<double>(c->top_level_replies));
        }
        for (const char* file : {"flagged.csv", "unflagged.csv"}) {
            for (const auto& a : read_annotations(evidence_dir(config, period) / file)) {
                if (!a.violating) continue;
                const Comment* c = corpus.find(a.comment_id);
                if (!c) throw std::runtime_error(std::string(file) + " names unknown comment " + a.comment_id);
                score_violating.push_back(static_cast<double>(c->score));
                replies_violating.push_back(static_cast<double>(c->top_level_replies));
            }
        }
        for (const auto& c : corpus.comments) {
            const bool moderated = c.moderation_status == ModerationStatus::moderated;
            if (!moderated && c.moderation_status != ModerationStatus::online) continue;
            (moderated ? flesch_moderated : flesch_online).push_back(flesch(c.body));
            (moderated ? text_moderated : text_online).push_back(c.body);
            if (const auto e = emotionality(c.body, lexicon)) (moderated ? emo_moderated : emo_online).push_back(*e);
        }
    }
    if (score_violating.size() < 2 || score_sample.size() < 2)
        throw ValidationError("engagement comparison needs at least two violating and two sampled comments");

    json out = provenance(config);
    std::string text = section_header(config, "Engagement and language");
    text += "Engagement: violating comments (annotated consensus) against the classified study sample.\n";
    const auto w_score = welch_t(score_violating, score_sample);
    const auto w_replies = welch_t(replies_violating, replies_sample);
    out["engagement"] = {{"score", welch_json(w_score, score_violating.size(), score_sample.size())},
                         {"top_level_replies", welch_json(w_replies, replies_violating.size(), replies_sample.size())}};
    text += render_table({"measure", "violating", "sample", "t", "df", "p"},
                         {welch_row("score", w_score, score_violating.size(), score_sample.size()),
                          welch_row("top-level replies", w_replies, replies_violating.size(), replies_sample.size())});

    text += "\nLanguage: moderated against online comments.\n";
    const auto w_flesch = welch_t(flesch_moderated, flesch_online);
    const auto w_emo = welch_t(emo_moderated, emo_online);
    const auto g_mod = group_emotionality(text_moderated, lexicon);
    const auto g_on = group_emotionality(text_online, lexicon);
    out["language"] = {
        {"flesch_reading_ease", welch_json(w_flesch, flesch_moderated.size(), flesch_online.size())},
        {"emotionality", welch_json(w_emo, emo_moderated.size(), emo_online.size())},
        {"emotionality_groups",
         {{"moderated", {{"mean", g_mod.mean}, {"sd", g_mod.sd}, {"matched", g_mod.matched}, {"unmatched", g_mod.unmatched}}},
          {"online", {{"mean", g_on.mean}, {"sd", g_on.sd}, {"matched", g_on.matched}, {"unmatched", g_on.unmatched}}}}}};
    text += render_table({"measure", "moderated", "online", "t", "df", "p"},
                         {welch_row("Flesch reading ease", w_flesch, flesch_moderated.size(), flesch_online.size()),
                          welch_row("emotionality", w_emo, emo_moderated.size(), emo_online.size())});
    text += "Emotionality excludes comments with no lexicon word: " + std::to_string(g_mod.unmatched) + " moderated, " +
            std::to_string(g_on.unmatched) + " online.\n";

    text += "\nPeriods: stratum-paired permutation test on estimated rates.\n";
    if (config.periods.size() >= 2) {
        auto rates = [&](const std::string& period) {
            std::vector<PeriodRate> out_rates;
            const auto est = read_json(estimate_dir(config, period) / "estimates.json");
            for (const auto& e : est.at("per_stratum"))
                out_rates.push_back({e.at("stratum_id").get<std::string>(), e.at("rate").at("median").get<double>(),
                                     e.at("population_online").get<std::int64_t>()});
            return out_rates;
        };
        const auto& a = config.periods[0];
        const auto& b = config.periods[1];
        const auto perm = permutation_test(rates(a), rates(b), config.permutations, stage_seed(config.seed, {"permute"}));
        out["periods"] = {{"a", a},
                          {"b", b},
                          {"statistic", perm.statistic},
                          {"p", perm.p_value},
                          {"pairs", perm.pairs},
                          {"permutations", config.permutations}};
        text += render_table({"periods", "weighted rate difference", "pairs", "permutations", "p"},
                             {{a + " - " + b, pct(perm.statistic) + " pp", std::to_string(perm.pairs),
                               std::to_string(config.permutations), format_fixed(perm.p_value, 4)}});
    } else {
        text += "Needs two periods.\n";
    }
    write_config_copy(config);
    fs::create_directories(config.output / "compare");
    write_json(config.output / "compare" / "compare.json", out);
    write_file(config.output / "compare" / "report.txt", text);
}

// ---------------------------------------------------------------------------
// report

void cmd_report(const RunConfig& config) {
    for (const auto& s : report_sections())
        require_file(config.output / s / "report.txt", "section '" + s + "' (run `normwatch " +
                                                           (s == "campaign" ? std::string("campaign simulate") : s) + "`)");
    std::string text = "normwatch report\nconfig " + config_hash(config) + "  seed " + std::to_string(config.seed) +
                       "  rng " + std::string(Rng::kName) + "\n\n";
    json out = provenance(config);
    out["sections"] = json::array();
    for (const auto& s : report_sections()) {
        text += read_file(config.output / s / "report.txt") + "\n";
        out["sections"].push_back({{"name", s}, {"text", s + "/report.txt"}, {"data", s + "/" + s + ".json"}});
    }
    write_config_copy(config);
    write_file(config.output / "report.txt", text);
    write_json(config.output / "report.json", out);
}

void run_pipeline(const RunConfig& config) {
    require_file(corpus_for(config, config.train_period), "training corpus");
    for (const auto& p : config.periods) require_file(corpus_for(config, p), "corpus for " + p);
    require_file(config.strata, "strata file");
    require_file(config.gold, "gold file");
    require_file(config.truth, "truth file");
    require_file(config.lexicon, "emotionality lexicon");
    cmd_train(config);
    cmd_flag(config);
    cmd_campaign_init(config, true);
    cmd_campaign_simulate(config, true);
    cmd_estimate(config);
    cmd_regress(config);
    cmd_compare(config);
    cmd_report(config);
}

}  // namespace normwatch
