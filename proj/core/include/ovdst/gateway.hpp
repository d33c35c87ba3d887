#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ovdst {

// Pipeline stage a request belongs to; the ledger is keyed by it.
enum class Stage {
    DomainClassification,
    EntityExtraction,
    DontCareDetection,
    McqAnswering,
    SrpTracking,
    Refinement,
};

std::string_view to_string(Stage s);
std::optional<Stage> stage_from_string(std::string_view s);

struct SamplingParams {
    double temperature = 0.3;  // [0, 2]
    double top_p = 0.9;        // (0, 1]
    int max_tokens = 1024;

    void validate() const;  // throws ConfigError
    bool operator==(const SamplingParams&) const = default;
};

// Maps provider model names ("gpt-4-turbo-preview", "Meta-Llama-3-70B-Instruct")
// to the short keys used for prompt assets and sampling defaults.
std::string canonical_model_key(std::string_view model);

// Per-model temperature/top-p tuned for classification and for tracking.
// Unknown models get (0.3, 0.9).
SamplingParams default_sampling(std::string_view model, Stage stage);

struct ResponseShape {
    enum class Kind { FreeText, JsonObject, JsonArray };

    Kind kind = Kind::FreeText;
    // JsonObject: expected keys. JsonArray: the single key holding the array.
    std::vector<std::string> keys;

    static ResponseShape free_text() { return {}; }
    static ResponseShape object(std::vector<std::string> keys) { return {Kind::JsonObject, std::move(keys)}; }
    static ResponseShape array(std::string key) { return {Kind::JsonArray, {std::move(key)}}; }
};

struct PromptSpec {
    std::string text;
    SamplingParams params;
    ResponseShape shape;
    Stage stage = Stage::SrpTracking;

    void validate() const;  // throws ConfigError
};

struct LedgerEntry {
    std::uint64_t requests = 0;
    std::uint64_t prompt_chars = 0;
    std::uint64_t failures = 0;

    bool operator==(const LedgerEntry&) const = default;
};

// Request accounting per (stage, backend). Counters only grow.
class RequestLedger {
public:
    using Key = std::pair<std::string, std::string>;  // stage, backend

    RequestLedger() = default;
    RequestLedger(const RequestLedger& other);
    RequestLedger& operator=(const RequestLedger& other);

    void record_request(Stage stage, const std::string& backend, std::uint64_t prompt_chars);
    void record_failure(Stage stage, const std::string& backend);
    void merge(const RequestLedger& other);

    std::map<Key, LedgerEntry> snapshot() const;
    std::uint64_t total_requests() const;
    std::uint64_t requests(Stage stage) const;
    std::uint64_t total_prompt_chars() const;
    std::uint64_t total_failures() const;

    nlohmann::json to_json() const;
    static RequestLedger from_json(const nlohmann::json& j);

    bool operator==(const RequestLedger& other) const { return snapshot() == other.snapshot(); }

private:
    mutable std::mutex mu_;
    std::map<Key, LedgerEntry> entries_;
};

// One physical call per send(). Implementations throw TransportError,
// RateLimited or BackendRefusal.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string name() const = 0;
    virtual std::string send(const PromptSpec& spec) = 0;
};

// Deterministic scripted backend. Rules are tried in order; the first whose
// predicate matches produces the response.
class MockBackend final : public Backend {
public:
    using Predicate = std::function<bool(std::string_view prompt)>;
    using Responder = std::function<std::string(std::string_view prompt)>;

    struct Rule {
        Predicate when;
        Responder respond;
    };

    enum class Failure { Transport, RateLimit, Refusal };

    explicit MockBackend(std::vector<Rule> rules = {}, std::string default_response = "{}",
                         std::string name = "mock");

    static Predicate contains(std::string needle);
    static Responder constant(std::string response);
    // Yields the responses in order, then keeps repeating the last one.
    static Responder sequence(std::vector<std::string> responses);

    void add_rule(Predicate when, Responder respond);
    // The next calls fail with these errors, in order, before rules apply.
    void inject_failures(std::vector<Failure> failures);

    std::string name() const override { return name_; }
    std::string send(const PromptSpec& spec) override;

    std::vector<std::string> calls() const;
    std::size_t call_count() const;

    // Script format: {"default": "...", "rules": [{"contains": "...",
    // "response": "..."} | {"contains": "...", "responses": ["...", ...]}]}
    static std::shared_ptr<MockBackend> from_json(const nlohmann::json& script);

private:
    std::string name_;
    std::vector<Rule> rules_;
    std::string default_response_;
    std::vector<Failure> pending_failures_;
    std::vector<std::string> calls_;
    mutable std::mutex mu_;
};

// Convenience: predicate/response pairs, first match wins.
std::shared_ptr<MockBackend> register_mock(
    std::vector<std::pair<MockBackend::Predicate, std::string>> script,
    std::string default_response = "{}");

struct HttpBackendConfig {
    std::string name = "openai";
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4-turbo-preview";
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::seconds timeout{120};
};

// OpenAI-compatible chat-completions backend. The API key is read from the
// environment variable named in the config; throws ConfigError if unset.
std::shared_ptr<Backend> make_http_backend(const HttpBackendConfig& config);

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
    double multiplier = 2.0;
};

struct ThrottleOptions {
    std::size_t max_concurrency = 0;  // 0 = unlimited
    double requests_per_minute = 0;   // 0 = unlimited
};

struct GatewayOptions {
    RetryPolicy retry;
    ThrottleOptions throttle;
    std::optional<std::filesystem::path> audit_log;  // JSON Lines
    std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

// Repair pipeline for model output: parse as-is, strip code fences, take the
// longest brace/bracket-balanced substring, then a lenient pass (trailing
// commas, single quotes, Python literals). Valid JSON is returned unchanged.
std::optional<nlohmann::json> repair_json(std::string_view raw);

class Gateway {
public:
    // Called when repair fails, before the reprompt; may rescue bare answers.
    using Salvage = std::function<std::optional<nlohmann::json>(std::string_view raw)>;

    explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {});

    // Raw completion with retries. Every physical call is one ledger request.
    std::string complete(const PromptSpec& spec);

    // Parsed completion shaped per spec.shape: JsonObject yields an object
    // with every expected key (missing ones set to null, the Absent marker);
    // JsonArray yields the value stored under the key (null if absent).
    // One repair-and-reprompt cycle, then UnparseableResponse.
    nlohmann::json complete_structured(const PromptSpec& spec, const Salvage& salvage = {});

    // Shares backend, throttle and audit log; counts into a fresh ledger as
    // well as this one.
    Gateway fork() const;

    const RequestLedger& ledger() const { return *ledger_; }
    const Backend& backend() const;

private:
    struct Shared;
    Gateway(std::shared_ptr<Shared> shared, std::shared_ptr<RequestLedger> ledger,
            std::vector<std::shared_ptr<RequestLedger>> parents);

    void record_request(const PromptSpec& spec);
    void record_failure(const PromptSpec& spec);

    std::shared_ptr<Shared> shared_;
    std::shared_ptr<RequestLedger> ledger_;
    std::vector<std::shared_ptr<RequestLedger>> parents_;
};

// Applies a ResponseShape to parsed JSON; nullopt when the shape does not fit.
std::optional<nlohmann::json> shape_response(const nlohmann::json& parsed, const ResponseShape& shape);

} // namespace ovdst
