#include "ovdst/pipeline.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "ovdst/domain_classifier.hpp"
#include "ovdst/dst_qa.hpp"
#include "ovdst/dst_srp.hpp"
#include "ovdst/errors.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCheckpoint = "checkpoint.jsonl";
constexpr const char* kReport = "report.json";
constexpr const char* kPredictions = "predictions.jsonl";
constexpr const char* kBudget = "budget.csv";
constexpr const char* kMisclassification = "misclassification.csv";
constexpr const char* kManifest = "manifest.json";
constexpr const char* kAudit = "audit.jsonl";

struct DialogueOutcome {
    std::vector<TurnRecord> records;
    RequestLedger ledger;
    json trace = json::array();
    bool ok = true;
};

json outcome_to_json(const std::string& id, const DialogueOutcome& o) {
    json recs = json::array();
    for (const auto& r : o.records) recs.push_back(r.to_json());
    return {{"dialogue_id", id}, {"records", recs}, {"ledger", o.ledger.to_json()}, {"trace", o.trace}};
}

std::map<std::string, DialogueOutcome> read_checkpoint(const fs::path& path) {
    std::map<std::string, DialogueOutcome> done;
    std::ifstream in(path);
    if (!in) return done;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            // a torn final line from an interrupted write
            spdlog::warn("{}:{}: ignoring unreadable checkpoint line", path.string(), lineno);
            continue;
        }
        try {
            DialogueOutcome o;
            for (const auto& r : j.at("records")) o.records.push_back(TurnRecord::from_json(r));
            o.ledger = RequestLedger::from_json(j.at("ledger"));
            o.trace = j.value("trace", json::array());
            done[j.at("dialogue_id").get<std::string>()] = std::move(o);
        } catch (const std::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return done;
}

DialogueOutcome process_dialogue(const Dialogue& d, const RunConfig& config, const Schema& schema,
                                 Gateway& gateway, const AssetLibrary& assets) {
    DialogueOutcome out;
    ClassifierOptions copts;
    copts.params = config.sampling(Stage::DomainClassification);
    QaOptions qopts;
    qopts.params = config.sampling(Stage::McqAnswering);
    qopts.extended_entities = config.qa_extended_entities;
    qopts.dontcare_scan = config.qa_dontcare_scan;
    SrpOptions sopts;
    sopts.model = config.model;
    sopts.with_ontology = config.with_ontology;
    sopts.params = config.sampling(Stage::SrpTracking);

    DialogueState state;
    std::optional<TurnDomainPrediction> previous;
    std::size_t user_pos = 0;
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const Turn& turn = d.turns[i];
        if (turn.speaker != Speaker::User) continue;
        const std::vector<Turn> history(d.turns.begin(), d.turns.begin() + static_cast<std::ptrdiff_t>(i));

        TurnRecord rec;
        rec.dialogue_id = d.id;
        rec.turn_index = turn.index;
        if (d.gold_turn_domains) rec.gold_domains = (*d.gold_turn_domains)[user_pos];
        if (d.gold_states) rec.gold_state = (*d.gold_states)[user_pos].without_requested();

        json turn_trace = {{"turn_index", turn.index}};
        if (config.domains == DomainSource::Gold) {
            rec.pred_domains = rec.gold_domains;
        } else {
            auto pred = classify_turn(turn, history, schema, gateway, assets, previous, copts);
            rec.pred_domains = pred.domains;
            if (pred.fallback) turn_trace["domain_fallback"] = true;
            previous = pred;
        }

        DialogueState delta;
        if (config.method == Method::SRP) {
            auto r = srp_track_turn(turn, history, rec.pred_domains, state, schema, gateway, assets, sopts);
            delta = r.delta;
            turn_trace["srp_delta"] = state_to_json(r.full_delta);
            if (!r.failed_domains.empty()) turn_trace["failed_domains"] = r.failed_domains;
        } else {
            auto r = qa_track_turn(turn, history, rec.pred_domains, state, schema, gateway, assets, qopts);
            delta = r.delta;
            turn_trace["qa"] = r.trace.to_json();
        }
        state = apply_turn_update(state, delta, schema);
        rec.pred_state = state.without_requested();
        out.records.push_back(std::move(rec));
        out.trace.push_back(std::move(turn_trace));
        ++user_pos;
    }
    out.ledger = gateway.ledger();
    return out;
}

json ledger_summary(const RequestLedger& ledger) {
    json by_stage = json::object();
    for (const auto& [key, entry] : ledger.snapshot()) {
        auto& s = by_stage[key.first];
        if (s.is_null()) s = {{"requests", 0}, {"prompt_chars", 0}, {"failures", 0}};
        s["requests"] = s["requests"].get<std::uint64_t>() + entry.requests;
        s["prompt_chars"] = s["prompt_chars"].get<std::uint64_t>() + entry.prompt_chars;
        s["failures"] = s["failures"].get<std::uint64_t>() + entry.failures;
    }
    return {{"total_requests", ledger.total_requests()},
            {"total_prompt_chars", ledger.total_prompt_chars()},
            {"total_failures", ledger.total_failures()},
            {"by_stage", by_stage},
            {"entries", ledger.to_json()}};
}

} // namespace

RunResult run_pipeline(const RunConfig& config, const Corpus& corpus, std::shared_ptr<Backend> backend,
                       const AssetLibrary& assets, GatewayOptions gateway_options) {
    config.validate();
    if (!backend) throw ConfigError("no backend");
    if (config.with_ontology) {
        for (const auto& d : corpus.schema.domains()) {
            if (!corpus.schema.has_ontology(d)) {
                throw MissingOntology("with_ontology needs ontology values; domain " + d + " has none");
            }
        }
    }
    if (config.method == Method::SRP) (void)assets.srp_asset(config.model);
    const auto selected = select_dialogues(corpus.dialogues.size(), config);
    for (auto i : selected) {
        const auto& d = corpus.dialogues[i];
        if (!d.gold_states) throw MissingGold("dialogue " + d.id + " has no gold states to score against");
        if (config.domains == DomainSource::Gold && !d.gold_turn_domains) {
            throw MissingGold("dialogue " + d.id + " has no gold turn domains");
        }
    }

    fs::create_directories(config.output_dir);
    const fs::path checkpoint = config.output_dir / kCheckpoint;
    if (fs::exists(config.output_dir / kReport)) {
        if (!config.force) {
            throw ConfigError("output directory " + config.output_dir.string() +
                              " already holds a report; pass --force to overwrite");
        }
    }
    if (config.force) {
        for (const char* f : {kCheckpoint, kReport, kPredictions, kBudget, kMisclassification, kManifest, kAudit}) {
            fs::remove(config.output_dir / f);
        }
    }
    if (!gateway_options.audit_log) gateway_options.audit_log = config.output_dir / kAudit;
    if (config.max_concurrency) gateway_options.throttle.max_concurrency = config.max_concurrency;
    if (config.requests_per_minute > 0) gateway_options.throttle.requests_per_minute = config.requests_per_minute;
    Gateway root(std::move(backend), std::move(gateway_options));

    std::map<std::string, DialogueOutcome> done = read_checkpoint(checkpoint);
    RunResult result;
    std::vector<std::size_t> pending;
    for (auto i : selected) {
        if (done.count(corpus.dialogues[i].id)) ++result.resumed_dialogues;
        else pending.push_back(i);
    }
    if (result.resumed_dialogues) spdlog::info("resuming: {} dialogue(s) already done", result.resumed_dialogues);

    std::mutex mu;
    std::ofstream ckpt(checkpoint, std::ios::app | std::ios::binary);
    if (!ckpt) throw IoError("cannot open checkpoint " + checkpoint.string());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> finished{0};
    std::atomic<bool> stop{false};

    auto worker = [&] {
        while (!stop) {
            const std::size_t k = next++;
            if (k >= pending.size()) return;
            const Dialogue& d = corpus.dialogues[pending[k]];
            Gateway gw = root.fork();
            DialogueOutcome o;
            try {
                o = process_dialogue(d, config, corpus.schema, gw, assets);
            } catch (const std::exception& e) {
                spdlog::error("dialogue {} failed: {}", d.id, e.what());
                std::lock_guard lock(mu);
                result.failed_dialogues.push_back(d.id);
                continue;
            }
            std::lock_guard lock(mu);
            if (stop) return;
            ckpt << outcome_to_json(d.id, o).dump() << '\n';
            ckpt.flush();
            done[d.id] = std::move(o);
            if (config.stop_after_dialogues && ++finished >= *config.stop_after_dialogues) stop = true;
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(config.workers, pending.size()));
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (!ckpt) throw IoError("checkpoint write failed: " + checkpoint.string());

    // Failed dialogues are scored with empty predictions so they count against the run.
    for (auto i : selected) {
        const Dialogue& d = corpus.dialogues[i];
        auto it = done.find(d.id);
        if (it != done.end()) {
            result.records.insert(result.records.end(), it->second.records.begin(), it->second.records.end());
            result.ledger.merge(it->second.ledger);
            result.dialogue_ids.push_back(d.id);
            continue;
        }
        if (stop) {
            result.complete = false;
            continue;
        }
        std::size_t u = 0;
        for (const auto& t : d.turns) {
            if (t.speaker != Speaker::User) continue;
            TurnRecord rec;
            rec.dialogue_id = d.id;
            rec.turn_index = t.index;
            if (d.gold_turn_domains) rec.gold_domains = (*d.gold_turn_domains)[u];
            rec.gold_state = (*d.gold_states)[u].without_requested();
            result.records.push_back(std::move(rec));
            ++u;
        }
        result.dialogue_ids.push_back(d.id);
    }
    std::sort(result.failed_dialogues.begin(), result.failed_dialogues.end());

    result.report = evaluate(result.records, corpus.schema.domains(), config.fuzzy_threshold);
    result.report.request_ledger = ledger_summary(result.ledger);
    result.report.metadata["dataset"] = std::string(to_string(config.dataset));
    result.report.metadata["method"] = std::string(to_string(config.method));
    result.report.metadata["domains"] = std::string(to_string(config.domains));
    result.report.metadata["with_ontology"] = config.with_ontology;
    result.report.metadata["model"] = config.model;
    result.report.metadata["failed_dialogues"] = result.failed_dialogues;
    result.report.metadata["complete"] = result.complete;

    bool have_gold_domains = true;
    Corpus scored;
    scored.schema = corpus.schema;
    for (auto i : selected) {
        const auto& d = corpus.dialogues[i];
        if (!d.gold_turn_domains) have_gold_domains = false;
        scored.dialogues.push_back(d);
    }
    if (have_gold_domains && !scored.dialogues.empty()) {
        std::optional<QaTrace> qa;
        if (config.method == Method::QA) qa = QaTrace::from_ledger(result.ledger, scored.dialogues.size());
        result.budget = budget_table(corpus_stats(scored), qa);
        result.report.metadata["budget"] = result.budget->to_json();
    }
    return result;
}

RunResult run_pipeline(const RunConfig& config) {
    config.validate();
    Corpus corpus = load_corpus(config);
    AssetLibrary assets = config.asset_dir.empty() ? AssetLibrary::load_default() : AssetLibrary::load(config.asset_dir);
    return run_pipeline(config, corpus, make_backend(config), assets);
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace

ReportFiles emit_report(const RunResult& result, const RunConfig& config) {
    if (!result.complete) throw ConfigError("run is incomplete; resume it before emitting a report");
    fs::create_directories(config.output_dir);
    ReportFiles files;
    files.report = config.output_dir / kReport;
    files.predictions = config.output_dir / kPredictions;
    files.budget = config.output_dir / kBudget;
    files.misclassification = config.output_dir / kMisclassification;
    files.manifest = config.output_dir / kManifest;

    std::string preds;
    for (const auto& r : result.records) preds += r.to_json().dump() + "\n";
    write_file(files.predictions, preds);
    write_file(files.budget, result.budget ? result.budget->to_csv() : std::string("strategy,total_requests\n"));
    write_file(files.misclassification, result.report.misclassification_matrix.to_csv());
    json manifest = {{"report", kReport},
                     {"predictions", kPredictions},
                     {"budget", kBudget},
                     {"misclassification", kMisclassification},
                     {"checkpoint", kCheckpoint},
                     {"audit_log", kAudit}};
    write_file(files.manifest, manifest.dump(2) + "\n");
    // The report goes last: its presence marks a finished run.
    write_file(files.report, result.report.to_json().dump(2) + "\n");
    return files;
}

std::vector<TurnRecord> read_predictions(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<TurnRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not JSON");
        out.push_back(TurnRecord::from_json(j));
    }
    return out;
}

EvalReport score_predictions(const fs::path& path, const std::vector<std::string>& domains, double threshold) {
    return evaluate(read_predictions(path), domains, threshold);
}

} // namespace ovdst
