#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ovdst/budget.hpp"
#include "ovdst/dataset.hpp"
#include "ovdst/evaluator.hpp"
#include "ovdst/gateway.hpp"
#include "ovdst/prompt_assets.hpp"

namespace ovdst {

enum class DatasetKind { Multiwoz21, Multiwoz24, Sgd };
enum class Method { QA, SRP };
enum class DomainSource { Gold, Predicted };

std::string_view to_string(DatasetKind k);
std::string_view to_string(Method m);
std::string_view to_string(DomainSource d);

struct RunConfig {
    DatasetKind dataset = DatasetKind::Multiwoz24;
    std::filesystem::path data_path;
    Method method = Method::SRP;
    DomainSource domains = DomainSource::Gold;
    bool with_ontology = false;

    // Backend: "mock" (scripted from mock_script), "openai" or "compatible".
    std::string backend = "mock";
    std::string model = "gpt-4-turbo";
    std::string base_url;
    std::string api_key_env;
    std::filesystem::path mock_script;
    double requests_per_minute = 0;
    std::size_t max_concurrency = 0;

    std::optional<double> temperature;
    std::optional<double> top_p;
    int max_tokens = 1024;

    bool qa_extended_entities = true;
    bool qa_dontcare_scan = true;
    double fuzzy_threshold = kDefaultFuzzyThreshold;

    std::optional<std::size_t> dialogue_limit;
    std::optional<std::uint64_t> seed;  // sample dialogue_limit dialogues at random
    std::filesystem::path output_dir = "ovdst-run";
    std::filesystem::path asset_dir;    // empty: the default asset directory
    std::size_t workers = 1;
    bool force = false;
    // Stop after this many freshly processed dialogues, leaving the
    // checkpoint for a later resume.
    std::optional<std::size_t> stop_after_dialogues;

    // Throws ConfigError.
    void validate() const;
    SamplingParams sampling(Stage stage) const;
};

// Sets one option from a "section.key" name, e.g. "run.method" = "qa".
// Throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
// Sectioned key=value file. Throws ConfigError / IoError.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base);
std::vector<std::string> config_keys();

Corpus load_corpus(const RunConfig& config);
std::shared_ptr<Backend> make_backend(const RunConfig& config);

// Chooses which dialogues run: all, the first N, or N sampled with the seed.
std::vector<std::size_t> select_dialogues(std::size_t available, const RunConfig& config);

struct RunResult {
    EvalReport report;
    std::vector<TurnRecord> records;
    RequestLedger ledger;
    std::optional<BudgetTable> budget;
    std::vector<std::string> dialogue_ids;
    std::vector<std::string> failed_dialogues;
    std::size_t resumed_dialogues = 0;
    bool complete = true;  // false when stopped early
};

// Processes every selected dialogue. Completed dialogues are appended to
// <output_dir>/checkpoint.jsonl and skipped on the next call. Refuses to run
// when report.json already exists unless config.force.
RunResult run_pipeline(const RunConfig& config, const Corpus& corpus, std::shared_ptr<Backend> backend,
                       const AssetLibrary& assets, GatewayOptions gateway_options = {});
// Loads corpus, backend and assets from the config.
RunResult run_pipeline(const RunConfig& config);

struct ReportFiles {
    std::filesystem::path report;
    std::filesystem::path predictions;
    std::filesystem::path budget;
    std::filesystem::path manifest;
    std::filesystem::path misclassification;
};

// Writes report.json, predictions.jsonl, budget.csv, misclassification.csv
// and manifest.json. Throws IoError.
ReportFiles emit_report(const RunResult& result, const RunConfig& config);

std::vector<TurnRecord> read_predictions(const std::filesystem::path& path);
EvalReport score_predictions(const std::filesystem::path& path, const std::vector<std::string>& domains = {},
                             double threshold = kDefaultFuzzyThreshold);

} // namespace ovdst
