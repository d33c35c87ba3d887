#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "ovdst/budget.hpp"
#include "ovdst/dataset.hpp"
#include "ovdst/errors.hpp"
#include "ovdst/pipeline.hpp"
#include "ovdst/prompt_assets.hpp"
#include "ovdst/refinery.hpp"
#include "ovdst/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ovdst::IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ovdst::IoError("cannot write " + p.string());
    out << s;
}

// Flags that mirror RunConfig keys; only the ones given on the command line
// are applied, after the config file.
struct ConfigFlags {
    std::map<std::string, std::string> values;
    std::vector<std::pair<std::string, CLI::Option*>> options;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        options.emplace_back(key, app->add_option(flag, values[key], help));
    }
    void add_bool(CLI::App* app, const std::string& flag, const std::string& key, const std::string& value,
                  const std::string& help) {
        auto* opt = app->add_flag_callback(flag, [this, key, value] { values[key] = value; }, help);
        options.emplace_back(key, opt);
    }
    void apply(ovdst::RunConfig& c) const {
        for (const auto& [key, opt] : options) {
            if (opt->count() > 0) ovdst::set_config_value(c, key, values.at(key));
        }
    }
};

void add_backend_flags(CLI::App* app, ConfigFlags& f) {
    f.add(app, "--backend", "backend.kind", "mock, openai or compatible");
    f.add(app, "--model", "backend.model", "model name, also selects prompt variant and sampling defaults");
    f.add(app, "--base-url", "backend.base_url", "base URL of an OpenAI-compatible endpoint");
    f.add(app, "--api-key-env", "backend.api_key_env", "environment variable holding the API key");
    f.add(app, "--mock-script", "backend.mock_script", "JSON script for the mock backend");
    f.add(app, "--rpm", "backend.requests_per_minute", "request rate limit");
    f.add(app, "--max-concurrency", "backend.max_concurrency", "in-flight request limit");
    f.add(app, "--temperature", "sampling.temperature", "override the model's default temperature");
    f.add(app, "--top-p", "sampling.top_p", "override the model's default top-p");
    f.add(app, "--max-tokens", "sampling.max_tokens", "completion token limit");
}

ovdst::Corpus load_dataset(const std::string& dataset, const fs::path& data) {
    ovdst::RunConfig c;
    ovdst::set_config_value(c, "run.dataset", dataset);
    c.data_path = data;
    return ovdst::load_corpus(c);
}

int cmd_run(const fs::path& config_file, const ConfigFlags& flags, std::optional<std::size_t> stop_after) {
    ovdst::RunConfig config = config_file.empty() ? ovdst::RunConfig{} : ovdst::load_run_config(config_file);
    flags.apply(config);
    config.stop_after_dialogues = stop_after;
    auto result = ovdst::run_pipeline(config);
    if (!result.complete) {
        std::cout << "stopped after " << *stop_after << " dialogue(s); rerun to resume\n";
        return 3;
    }
    auto files = ovdst::emit_report(result, config);
    std::cout << result.report.to_text_table();
    if (result.budget) std::cout << '\n' << result.budget->to_text();
    std::cout << "\nreport written to " << files.report.string() << '\n';
    return result.failed_dialogues.empty() ? 0 : 2;
}

int cmd_score(const fs::path& predictions, double threshold, const std::string& domains, const fs::path& json_out) {
    std::vector<std::string> labels;
    if (!domains.empty()) labels = ovdst::text::split(domains, ',');
    auto report = ovdst::score_predictions(predictions, labels, threshold);
    std::cout << report.to_text_table();
    if (!json_out.empty()) write_text(json_out, report.to_json().dump(2) + "\n");
    return 0;
}

int cmd_stats(const std::string& dataset, const fs::path& data) {
    auto corpus = load_dataset(dataset, data);
    std::cout << ovdst::stats_to_json(ovdst::corpus_stats(corpus)).dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot open-vocabulary dialogue state tracking"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");

    // run
    auto* run = app.add_subcommand("run", "track dialogue states and score them");
    fs::path run_config;
    std::optional<std::size_t> stop_after;
    ConfigFlags run_flags;
    run->add_option("-c,--config", run_config, "sectioned key=value config file")->check(CLI::ExistingFile);
    run_flags.add(run, "--dataset", "run.dataset", "multiwoz-2.1, multiwoz-2.4 or sgd");
    run_flags.add(run, "--data", "run.data_path", "dataset directory");
    run_flags.add(run, "--method", "run.method", "qa or srp");
    run_flags.add(run, "--domains", "run.domains", "gold or predicted");
    run_flags.add_bool(run, "--with-ontology", "run.with_ontology", "true", "list ontology values in SRP prompts");
    run_flags.add(run, "--limit", "run.dialogue_limit", "number of dialogues");
    run_flags.add(run, "--seed", "run.seed", "sample --limit dialogues with this seed");
    run_flags.add(run, "-o,--out", "run.output_dir", "output directory");
    run_flags.add(run, "--assets", "run.asset_dir", "prompt asset directory");
    run_flags.add(run, "-j,--workers", "run.workers", "dialogues processed in parallel");
    run_flags.add_bool(run, "--force", "run.force", "true", "overwrite a finished run");
    run_flags.add_bool(run, "--no-extended-entities", "qa.extended_entities", "false",
                       "skip the DAY/TYPE/RANGE extraction pass");
    run_flags.add_bool(run, "--no-dontcare-scan", "qa.dontcare_scan", "false", "skip the dontcare prompt");
    run_flags.add(run, "--fuzzy-threshold", "eval.fuzzy_threshold", "edit similarity threshold");
    add_backend_flags(run, run_flags);
    run->add_option("--stop-after", stop_after, "stop after N dialogues (resume later)");

    // score
    auto* score = app.add_subcommand("score", "rescore a predictions.jsonl file");
    fs::path predictions, score_json;
    double threshold = ovdst::kDefaultFuzzyThreshold;
    std::string score_domains;
    score->add_option("predictions", predictions, "predictions.jsonl")->required()->check(CLI::ExistingFile);
    score->add_option("--fuzzy-threshold", threshold, "edit similarity threshold");
    score->add_option("--labels", score_domains, "comma-separated matrix labels");
    score->add_option("--json", score_json, "also write the report as JSON");

    // budget
    auto* budget = app.add_subcommand("budget", "request counts per tracking strategy");
    std::string b_dataset;
    fs::path b_data, b_csv, b_report;
    std::uint64_t b_dialogues = 1000, b_turns = 7372, b_slots = 61, b_domains = 8;
    double b_avg_domains = 1.78;
    bool b_weighted = false;
    budget->add_option("--dataset", b_dataset, "compute statistics from a dataset");
    budget->add_option("--data", b_data, "dataset directory");
    budget->add_option("--dialogues", b_dialogues, "dialogue count when no dataset is given");
    budget->add_option("--turns", b_turns, "user turn count when no dataset is given");
    budget->add_option("--slots", b_slots, "slot count when no dataset is given");
    budget->add_option("--domain-count", b_domains, "domain count when no dataset is given");
    budget->add_option("--avg-domains", b_avg_domains, "mean domains per user turn when no dataset is given");
    budget->add_option("--qa-report", b_report, "report.json of a QA run, for measured QA counts")
        ->check(CLI::ExistingFile);
    budget->add_flag("--weighted", b_weighted, "use each active domain's own slot count");
    budget->add_option("--csv", b_csv, "write the table as CSV");

    // refine
    auto* refine = app.add_subcommand("refine", "self-refine a prompt with model feedback");
    fs::path r_prompt, r_sample, r_out = "refined", r_assets;
    int r_iters = 5;
    std::string r_stage = "srp-tracking", r_key;
    ConfigFlags refine_flags;
    refine->add_option("--prompt", r_prompt, "initial prompt text file")->required()->check(CLI::ExistingFile);
    refine->add_option("--sample", r_sample, "dialogue the model runs the prompt on")->check(CLI::ExistingFile);
    refine->add_option("--max-iters", r_iters, "iteration cap");
    refine->add_option("-o,--out", r_out, "output asset directory");
    refine->add_option("--assets", r_assets, "asset directory to copy into the output");
    refine->add_option("--stage", r_stage, "stage of the refined asset");
    refine->add_option("--model-key", r_key, "model key of the refined asset (default: canonical model key)");
    add_backend_flags(refine, refine_flags);

    // stats
    auto* stats = app.add_subcommand("stats", "corpus statistics");
    std::string s_dataset = "multiwoz-2.4";
    fs::path s_data;
    stats->add_option("--dataset", s_dataset, "multiwoz-2.1, multiwoz-2.4 or sgd");
    stats->add_option("--data", s_data, "dataset directory")->required();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
        if (run->parsed()) return cmd_run(run_config, run_flags, stop_after);
        if (score->parsed()) return cmd_score(predictions, threshold, score_domains, score_json);
        if (stats->parsed()) return cmd_stats(s_dataset, s_data);
        if (budget->parsed()) {
            ovdst::CorpusStats st;
            if (!b_dataset.empty()) {
                st = ovdst::corpus_stats(load_dataset(b_dataset, b_data));
            } else {
                st = ovdst::stats_from_totals(b_dialogues, b_turns, b_slots, b_domains, b_avg_domains);
            }
            std::optional<ovdst::QaTrace> qa;
            if (!b_report.empty()) {
                auto rep = json::parse(read_text(b_report));
                auto ledger = ovdst::RequestLedger::from_json(rep.at("request_ledger").at("entries"));
                qa = ovdst::QaTrace::from_ledger(ledger, rep.at("dialogue_count").get<std::uint64_t>());
            }
            ovdst::BudgetOptions opts;
            opts.turn_weighted_slots = b_weighted;
            auto table = ovdst::budget_table(st, qa, opts);
            std::cout << table.to_text();
            if (!b_csv.empty()) write_text(b_csv, table.to_csv());
            return 0;
        }
        if (refine->parsed()) {
            ovdst::RunConfig config;
            config.data_path = ".";
            refine_flags.apply(config);
            config.validate();
            ovdst::Gateway gateway(ovdst::make_backend(config));
            ovdst::RefinementOptions opts;
            opts.max_iters = r_iters;
            opts.params = config.sampling(ovdst::Stage::Refinement);
            if (!r_sample.empty()) opts.sample_dialogue = read_text(r_sample);
            auto result = ovdst::refine_prompt(read_text(r_prompt), gateway, opts);

            auto stage = ovdst::stage_from_string(r_stage);
            if (!stage) throw ovdst::ConfigError("unknown stage '" + r_stage + "'");
            ovdst::AssetLibrary lib = r_assets.empty() ? ovdst::AssetLibrary{} : ovdst::AssetLibrary::load(r_assets);
            ovdst::PromptAsset asset;
            asset.stage = *stage;
            asset.model_key = r_key.empty() ? ovdst::canonical_model_key(config.model) : r_key;
            asset.id = r_stage + "-" + asset.model_key;
            asset.template_text = result.prompt;
            lib.put(asset);
            lib.save(r_out);
            write_text(r_out / "refinement-trace.json", result.trace.to_json().dump(2) + "\n");
            std::cout << "stopped: " << ovdst::to_string(result.trace.stop_reason) << " after "
                      << result.trace.iterations.size() << " iteration(s); assets in " << r_out.string() << '\n';
            return 0;
        }
    } catch (const ovdst::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
