// normwatch command line.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "normwatch/desk.hpp"
#include "normwatch/pipeline.hpp"
#include "normwatch/rng.hpp"
#include "normwatch/service.hpp"
#include "normwatch/stats.hpp"

using namespace normwatch;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

HttpServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

void apply_hyperparam(HyperParams& hp, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ValidationError("--hp expects key=value, got " + assignment);
    const auto key = assignment.substr(0, eq);
    const auto value = assignment.substr(eq + 1);
    try {
        if (key == "vocab_size") hp.vocab_size = std::stoi(value);
        else if (key == "max_len") hp.max_len = std::stoi(value);
        else if (key == "epochs") hp.epochs = std::stoi(value);
        else if (key == "relu_nodes") hp.relu_nodes = std::stoi(value);
        else if (key == "embedding_dim") hp.embedding_dim = std::stoi(value);
        else if (key == "learning_rate") hp.learning_rate = std::stod(value);
        else if (key == "batch_size") hp.batch_size = std::stoi(value);
        else throw ValidationError("unknown hyperparameter " + key);
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ValidationError*>(&e)) throw;
        throw ValidationError("bad value for hyperparameter " + key + ": " + value);
    }
}

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? v : "";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"normwatch: estimate norm violation rates in community comments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "normwatch 1.0");

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    app.add_option("--config", config_path, "Run configuration (JSON)");
    app.add_option("--seed", seed, "Override the configured seed");
    app.add_option("--out", out_dir, "Override the output directory");

    // train
    auto* train = app.add_subcommand("train", "Train one classifier per stratum");
    std::string corpus_path, period, stratum;
    bool grid = false;
    std::vector<std::string> hp_overrides;
    train->add_option("--corpus", corpus_path, "Training corpus (JSONL)");
    train->add_option("--period", period, "Period of the training corpus");
    train->add_option("--stratum", stratum, "Train only this stratum");
    train->add_flag("--grid", grid, "Grid search over the candidate hyperparameters");
    train->add_option("--hp", hp_overrides, "Hyperparameter override key=value")->take_all();

    // flag
    auto* flag_cmd = app.add_subcommand("flag", "Score the study sample with the ensemble");
    std::optional<int> threshold;
    flag_cmd->add_option("--threshold", threshold, "Agreement needed to flag a comment");

    // campaign
    auto* campaign = app.add_subcommand("campaign", "Annotation campaign");
    campaign->require_subcommand(1);
    bool force = false, partial = false;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string serve_period;
    auto* init = campaign->add_subcommand("init", "Write tasks and gold for each period");
    init->add_flag("--force", force, "Discard existing annotations");
    auto* simulate = campaign->add_subcommand("simulate", "Annotate with scripted annotators and export");
    simulate->add_flag("--force", force, "Discard existing annotations");
    auto* serve = campaign->add_subcommand("serve", "Serve the annotation API for one period");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port (0 picks a free one)");
    serve->add_option("--period", serve_period, "Period to serve (default: the first)");
    auto* exp = campaign->add_subcommand("export", "Export consensus labels into the evidence directory");
    exp->add_flag("--partial", partial, "Export closed comments while others are still open");

    // estimate
    auto* estimate = app.add_subcommand("estimate", "Bootstrap violation rates");
    std::string evidence_path;
    std::optional<int> iterations;
    std::optional<double> ablate_fraction;
    bool reference_sim = false, samples = false;
    estimate->add_option("--evidence", evidence_path, "Estimate this evidence directory only");
    estimate->add_option("--iterations", iterations, "Bootstrap iterations");
    estimate->add_option("--ablate", ablate_fraction, "Also estimate with this fraction of annotations");
    estimate->add_flag("--reference-sim", reference_sim, "Per-comment simulation instead of binomial draws");
    estimate->add_flag("--samples", samples, "Write per-iteration samples.csv");

    auto* regress = app.add_subcommand("regress", "Poisson regression of violations on stratum covariates");
    auto* compare = app.add_subcommand("compare", "Engagement, language and period comparisons");
    auto* report = app.add_subcommand("report", "Assemble the combined report");
    auto* run = app.add_subcommand("run", "Run every stage in order");

    auto* fixture = app.add_subcommand("fixture", "Write the desk-scale demo data set");
    std::string fixture_out;
    fixture->add_option("--out", fixture_out, "Directory for the data set")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (fixture->parsed()) {
            const std::uint64_t s = seed.value_or(20240601);
            write_desk_fixture(fixture_out, make_desk_fixture(DeskFixtureParams{}, s), s);
            std::cout << "wrote " << fixture_out << "\n";
            return 0;
        }

        RunConfig config;
        if (!config_path.empty()) {
            config = load_config(config_path);
        } else {
            config.base = std::filesystem::current_path();
        }
        if (seed) config.seed = *seed;
        if (!out_dir.empty()) {
            config.output = std::filesystem::absolute(out_dir);
            config.models.clear();
            config.evidence.clear();
        }
        if (train->parsed()) {
            if (!period.empty()) {
                config.train_period = period;
                if (std::find(config.periods.begin(), config.periods.end(), period) == config.periods.end())
                    config.periods.push_back(period);
            }
            if (!corpus_path.empty()) {
                if (config.train_period.empty()) throw ValidationError("--corpus needs --period or a configured period");
                config.corpus[config.train_period] = std::filesystem::absolute(corpus_path);
            }
            config.only_stratum = stratum;
            if (grid) config.grid = true;
            for (const auto& a : hp_overrides) apply_hyperparam(config.hyperparams, a);
        }
        if (threshold) config.threshold = *threshold;
        if (iterations) config.iterations = *iterations;
        if (ablate_fraction) config.ablation_fraction = *ablate_fraction;
        if (reference_sim) config.reference_simulation = true;
        if (samples) config.write_samples = true;
        finalize(config);

        if (train->parsed()) cmd_train(config);
        else if (flag_cmd->parsed()) cmd_flag(config);
        else if (init->parsed()) cmd_campaign_init(config, force);
        else if (simulate->parsed()) cmd_campaign_simulate(config, force);
        else if (exp->parsed()) cmd_campaign_export(config, partial);
        else if (serve->parsed()) {
            const std::string p = serve_period.empty() ? (config.periods.empty() ? "" : config.periods.front()) : serve_period;
            if (p.empty()) throw ValidationError("no period to serve");
            const auto dir = campaign_dir(config, p);
            if (!std::filesystem::is_regular_file(dir / "tasks.jsonl"))
                throw ValidationError("no campaign in " + dir.string() + " (run `normwatch campaign init`)");
            ServiceOptions options;
            options.admin_secret = env_or_empty("NORMWATCH_ADMIN_SECRET");
            options.code_key = env_or_empty("NORMWATCH_CODE_KEY");
            if (options.code_key.empty()) throw ValidationError("NORMWATCH_CODE_KEY must be set");
            CampaignOptions campaign_options;
            campaign_options.seed = stage_seed(config.seed, {"assign", p});
            Campaign c(load_campaign(dir), campaign_options, dir / "events.jsonl");
            Service service(c, options);
            HttpServer server(service);
            const int bound = server.bind(host, port);
            std::cout << "serving " << p << " on http://" << host << ":" << bound << "\n" << std::flush;
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.listen();
            g_server = nullptr;
        } else if (estimate->parsed()) {
            if (!evidence_path.empty()) {
                const std::filesystem::path ev = std::filesystem::absolute(evidence_path);
                estimate_evidence(config, ev, config.output / "estimate" / ev.filename(), ev.filename().string());
            } else {
                cmd_estimate(config);
            }
        } else if (regress->parsed()) cmd_regress(config);
        else if (compare->parsed()) cmd_compare(config);
        else if (report->parsed()) cmd_report(config);
        else if (run->parsed()) run_pipeline(config);
        return 0;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const RegressionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
