#include "ovdst/gateway.hpp"

#include <algorithm>
#include <condition_variable>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "ovdst/errors.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

using nlohmann::json;

namespace {

constexpr std::pair<Stage, std::string_view> kStageNames[] = {
    {Stage::DomainClassification, "domain-classification"},
    {Stage::EntityExtraction, "entity-extraction"},
    {Stage::DontCareDetection, "dontcare-detection"},
    {Stage::McqAnswering, "mcq-answering"},
    {Stage::SrpTracking, "srp-tracking"},
    {Stage::Refinement, "refinement"},
};

} // namespace

std::string_view to_string(Stage s) {
    for (const auto& [stage, name] : kStageNames) {
        if (stage == s) return name;
    }
    return "unknown";
}

std::optional<Stage> stage_from_string(std::string_view s) {
    for (const auto& [stage, name] : kStageNames) {
        if (name == s) return stage;
    }
    return std::nullopt;
}

void SamplingParams::validate() const {
    if (!(temperature >= 0.0 && temperature <= 2.0)) throw ConfigError("temperature must be in [0, 2]");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
    if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

std::string canonical_model_key(std::string_view model) {
    const std::string m = text::to_lower(model);
    auto has = [&](std::string_view s) { return m.find(s) != std::string::npos; };
    if (has("gpt-4")) return "gpt-4-turbo";
    if (has("gpt-3.5")) return "gpt-3.5-turbo";
    if (has("llama-3") || has("llama3") || has("llama 3")) return "llama-3";
    if (has("gemini")) return "gemini-1.0";
    if (has("qwen")) return "qwen-1.5";
    if (has("mixtral")) return "mixtral-0.1";
    return m;
}

SamplingParams default_sampling(std::string_view model, Stage stage) {
    struct Row {
        std::string_view key;
        double dc_temp, dc_top_p, dst_temp, dst_top_p;
    };
    static constexpr Row table[] = {
        {"gpt-4-turbo", 0.3, 0.9, 0.5, 0.9},
        {"gemini-1.0", 0.8, 1.0, 0.9, 1.0},
        {"llama-3", 0.25, 0.9, 0.7, 0.9},
        {"qwen-1.5", 0.25, 1.0, 0.25, 1.0},
        {"mixtral-0.1", 0.25, 0.9, 0.25, 1.0},
    };
    const std::string key = canonical_model_key(model);
    SamplingParams p;
    for (const auto& row : table) {
        if (row.key != key) continue;
        if (stage == Stage::DomainClassification) {
            p.temperature = row.dc_temp;
            p.top_p = row.dc_top_p;
        } else {
            p.temperature = row.dst_temp;
            p.top_p = row.dst_top_p;
        }
    }
    return p;
}

void PromptSpec::validate() const {
    if (text.empty()) throw ConfigError("prompt text must be non-empty");
    params.validate();
    if (shape.kind == ResponseShape::Kind::JsonObject && shape.keys.empty()) {
        throw ConfigError("JsonObject shape needs at least one expected key");
    }
    if (shape.kind == ResponseShape::Kind::JsonArray && shape.keys.size() != 1) {
        throw ConfigError("JsonArray shape needs exactly one key");
    }
}

// --- RequestLedger -------------------------------------------------------

RequestLedger::RequestLedger(const RequestLedger& other) : entries_(other.snapshot()) {}

RequestLedger& RequestLedger::operator=(const RequestLedger& other) {
    if (this != &other) {
        auto snap = other.snapshot();
        std::lock_guard lock(mu_);
        entries_ = std::move(snap);
    }
    return *this;
}

void RequestLedger::record_request(Stage stage, const std::string& backend, std::uint64_t prompt_chars) {
    std::lock_guard lock(mu_);
    auto& e = entries_[{std::string(to_string(stage)), backend}];
    ++e.requests;
    e.prompt_chars += prompt_chars;
}

void RequestLedger::record_failure(Stage stage, const std::string& backend) {
    std::lock_guard lock(mu_);
    ++entries_[{std::string(to_string(stage)), backend}].failures;
}

void RequestLedger::merge(const RequestLedger& other) {
    auto snap = other.snapshot();
    std::lock_guard lock(mu_);
    for (const auto& [k, v] : snap) {
        auto& e = entries_[k];
        e.requests += v.requests;
        e.prompt_chars += v.prompt_chars;
        e.failures += v.failures;
    }
}

std::map<RequestLedger::Key, LedgerEntry> RequestLedger::snapshot() const {
    std::lock_guard lock(mu_);
    return entries_;
}

std::uint64_t RequestLedger::total_requests() const {
    std::lock_guard lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [_, e] : entries_) n += e.requests;
    return n;
}

std::uint64_t RequestLedger::requests(Stage stage) const {
    std::lock_guard lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [k, e] : entries_) {
        if (k.first == to_string(stage)) n += e.requests;
    }
    return n;
}

std::uint64_t RequestLedger::total_prompt_chars() const {
    std::lock_guard lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [_, e] : entries_) n += e.prompt_chars;
    return n;
}

std::uint64_t RequestLedger::total_failures() const {
    std::lock_guard lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [_, e] : entries_) n += e.failures;
    return n;
}

json RequestLedger::to_json() const {
    json rows = json::array();
    for (const auto& [k, e] : snapshot()) {
        rows.push_back({{"stage", k.first},
                        {"backend", k.second},
                        {"requests", e.requests},
                        {"prompt_chars", e.prompt_chars},
                        {"failures", e.failures}});
    }
    return rows;
}

RequestLedger RequestLedger::from_json(const json& j) {
    RequestLedger l;
    for (const auto& row : j) {
        auto& e = l.entries_[{row.at("stage").get<std::string>(), row.at("backend").get<std::string>()}];
        e.requests += row.at("requests").get<std::uint64_t>();
        e.prompt_chars += row.at("prompt_chars").get<std::uint64_t>();
        e.failures += row.at("failures").get<std::uint64_t>();
    }
    return l;
}

// --- MockBackend ---------------------------------------------------------

MockBackend::MockBackend(std::vector<Rule> rules, std::string default_response, std::string name)
    : name_(std::move(name)), rules_(std::move(rules)), default_response_(std::move(default_response)) {}

MockBackend::Predicate MockBackend::contains(std::string needle) {
    return [needle = std::move(needle)](std::string_view prompt) {
        return prompt.find(needle) != std::string_view::npos;
    };
}

MockBackend::Responder MockBackend::constant(std::string response) {
    return [response = std::move(response)](std::string_view) { return response; };
}

MockBackend::Responder MockBackend::sequence(std::vector<std::string> responses) {
    auto next = std::make_shared<std::size_t>(0);
    return [responses = std::move(responses), next](std::string_view) {
        if (responses.empty()) return std::string();
        const std::size_t i = std::min(*next, responses.size() - 1);
        ++*next;
        return responses[i];
    };
}

void MockBackend::add_rule(Predicate when, Responder respond) {
    std::lock_guard lock(mu_);
    rules_.push_back({std::move(when), std::move(respond)});
}

void MockBackend::inject_failures(std::vector<Failure> failures) {
    std::lock_guard lock(mu_);
    pending_failures_.insert(pending_failures_.end(), failures.begin(), failures.end());
}

std::string MockBackend::send(const PromptSpec& spec) {
    std::lock_guard lock(mu_);
    calls_.push_back(spec.text);
    if (!pending_failures_.empty()) {
        const Failure f = pending_failures_.front();
        pending_failures_.erase(pending_failures_.begin());
        switch (f) {
        case Failure::Transport: throw TransportError("mock: injected transport failure");
        case Failure::RateLimit: throw RateLimited("mock: injected rate limit", std::chrono::milliseconds(0));
        case Failure::Refusal: throw BackendRefusal("mock: injected refusal");
        }
    }
    for (const auto& rule : rules_) {
        if (rule.when(spec.text)) return rule.respond(spec.text);
    }
    return default_response_;
}

std::vector<std::string> MockBackend::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::size_t MockBackend::call_count() const {
    std::lock_guard lock(mu_);
    return calls_.size();
}

std::shared_ptr<MockBackend> MockBackend::from_json(const json& script) {
    auto mock = std::make_shared<MockBackend>(std::vector<Rule>{}, script.value("default", std::string("{}")));
    for (const auto& r : script.value("rules", json::array())) {
        if (!r.is_object() || !r.contains("contains") || !(r.contains("response") || r.contains("responses"))) {
            throw FormatError("mock rule needs \"contains\" and \"response\" or \"responses\": " + r.dump());
        }
        auto when = contains(r.at("contains").get<std::string>());
        if (r.contains("responses")) {
            mock->add_rule(std::move(when), sequence(r["responses"].get<std::vector<std::string>>()));
        } else {
            mock->add_rule(std::move(when), constant(r.at("response").get<std::string>()));
        }
    }
    return mock;
}

std::shared_ptr<MockBackend> register_mock(std::vector<std::pair<MockBackend::Predicate, std::string>> script,
                                           std::string default_response) {
    std::vector<MockBackend::Rule> rules;
    for (auto& [pred, response] : script) {
        rules.push_back({std::move(pred), MockBackend::constant(std::move(response))});
    }
    return std::make_shared<MockBackend>(std::move(rules), std::move(default_response));
}

// --- JSON repair ---------------------------------------------------------

namespace {

std::optional<json> try_parse(std::string_view s) {
    json j = json::parse(s.begin(), s.end(), nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
}

std::string strip_code_fences(std::string_view raw) {
    const auto open = raw.find("```");
    if (open == std::string_view::npos) return std::string(raw);
    auto body_start = raw.find('\n', open);
    const auto close = raw.find("```", open + 3);
    if (body_start == std::string_view::npos || (close != std::string_view::npos && body_start > close)) {
        // Single-line fence: ```{"a":1}``` or ```json {"a":1}```
        body_start = open + 3;
        while (body_start < raw.size() && std::isalpha(static_cast<unsigned char>(raw[body_start]))) ++body_start;
    } else {
        ++body_start;
    }
    const auto end = close == std::string_view::npos ? raw.size() : close;
    if (end < body_start) return std::string(raw);
    return std::string(raw.substr(body_start, end - body_start));
}

// Longest substring that opens with { or [ and closes balanced, honouring
// double-quoted strings.
std::optional<std::string> longest_balanced(std::string_view s) {
    std::size_t best_start = 0;
    std::size_t best_len = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '{' && s[i] != '[') {
            ++i;
            continue;
        }
        std::vector<char> stack;
        bool in_string = false;
        bool escaped = false;
        std::size_t end = std::string_view::npos;
        for (std::size_t j = i; j < s.size(); ++j) {
            const char c = s[j];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{' || c == '[') {
                stack.push_back(c == '{' ? '}' : ']');
            } else if (c == '}' || c == ']') {
                if (stack.empty() || stack.back() != c) break;
                stack.pop_back();
                if (stack.empty()) {
                    end = j;
                    break;
                }
            }
        }
        if (end != std::string_view::npos) {
            const std::size_t len = end - i + 1;
            if (len > best_len) {
                best_len = len;
                best_start = i;
            }
            i = end + 1;
        } else {
            ++i;
        }
    }
    if (best_len == 0) return std::nullopt;
    return std::string(s.substr(best_start, best_len));
}

// Trailing commas, single-quoted strings and Python literals. A single quote
// opens a string only where a value may start and closes it only before a
// delimiter, so apostrophes inside words survive.
std::string lenient_fix(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    char quote = 0;
    auto next_solid = [&](std::size_t from) {
        while (from < s.size() && std::isspace(static_cast<unsigned char>(s[from]))) ++from;
        return from < s.size() ? s[from] : '\0';
    };
    auto prev_solid = [&]() {
        for (auto it = out.rbegin(); it != out.rend(); ++it) {
            if (!std::isspace(static_cast<unsigned char>(*it))) return *it;
        }
        return '\0';
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (c == '\\' && i + 1 < s.size()) {
                out.push_back(c);
                out.push_back(s[++i]);
                continue;
            }
            if (c == quote) {
                const char n = next_solid(i + 1);
                if (quote == '"' || n == ',' || n == ':' || n == '}' || n == ']' || n == '\0') {
                    in_string = false;
                    out.push_back('"');
                    continue;
                }
            }
            if (c == '"' && quote == '\'') {
                out += "\\\"";
                continue;
            }
            out.push_back(c);
            continue;
        }
        if (c == '"' || (c == '\'' && std::string_view("{[:,").find(prev_solid()) != std::string_view::npos)) {
            in_string = true;
            quote = c;
            out.push_back('"');
            continue;
        }
        if (c == ',') {
            const char n = next_solid(i + 1);
            if (n == '}' || n == ']') continue;
        }
        auto word = [&](std::string_view w) { return s.substr(i, w.size()) == w; };
        if (word("True")) { out += "true"; i += 3; continue; }
        if (word("False")) { out += "false"; i += 4; continue; }
        if (word("None")) { out += "null"; i += 3; continue; }
        out.push_back(c);
    }
    return out;
}

} // namespace

std::optional<json> repair_json(std::string_view raw) {
    if (auto j = try_parse(raw)) return j;
    const std::string unfenced = strip_code_fences(raw);
    if (auto j = try_parse(unfenced)) return j;
    if (auto sub = longest_balanced(unfenced)) {
        if (auto j = try_parse(*sub)) return j;
        if (auto j = try_parse(lenient_fix(*sub))) return j;
    }
    const std::string fixed = lenient_fix(unfenced);
    if (auto sub = longest_balanced(fixed)) {
        if (auto j = try_parse(*sub)) return j;
    }
    return std::nullopt;
}

std::optional<json> shape_response(const json& parsed, const ResponseShape& shape) {
    switch (shape.kind) {
    case ResponseShape::Kind::FreeText:
        return std::optional<json>(std::in_place, parsed);
    case ResponseShape::Kind::JsonObject: {
        if (!parsed.is_object()) return std::nullopt;
        json out = parsed;
        for (const auto& k : shape.keys) {
            if (!out.contains(k)) out[k] = nullptr;
        }
        return out;
    }
    case ResponseShape::Kind::JsonArray: {
        if (parsed.is_array()) return std::optional<json>(std::in_place, parsed);
        if (!parsed.is_object()) return std::nullopt;
        const std::string& key = shape.keys.front();
        for (const auto& [k, v] : parsed.items()) {
            if (text::iequals(k, key)) return std::optional<json>(std::in_place, v);
        }
        return json(nullptr);
    }
    }
    return std::nullopt;
}

// --- Gateway -------------------------------------------------------------

struct Gateway::Shared {
    std::shared_ptr<Backend> backend;
    GatewayOptions options;

    std::mutex throttle_mu;
    std::condition_variable throttle_cv;
    std::size_t in_flight = 0;
    std::chrono::steady_clock::time_point next_slot{};

    std::mutex audit_mu;
    std::ofstream audit;

    void sleep(std::chrono::milliseconds d) const {
        if (d.count() <= 0) return;
        if (options.sleep) options.sleep(d);
        else std::this_thread::sleep_for(d);
    }

    void acquire() {
        std::chrono::milliseconds wait{0};
        {
            std::unique_lock lock(throttle_mu);
            const std::size_t cap = options.throttle.max_concurrency;
            if (cap > 0) throttle_cv.wait(lock, [&] { return in_flight < cap; });
            ++in_flight;
            const double rpm = options.throttle.requests_per_minute;
            if (rpm > 0) {
                const auto spacing = std::chrono::microseconds(static_cast<std::int64_t>(60e6 / rpm));
                const auto now = std::chrono::steady_clock::now();
                const auto slot = std::max(now, next_slot);
                next_slot = slot + spacing;
                wait = std::chrono::duration_cast<std::chrono::milliseconds>(slot - now);
            }
        }
        sleep(wait);
    }

    void release() {
        {
            std::lock_guard lock(throttle_mu);
            --in_flight;
        }
        throttle_cv.notify_one();
    }

    void write_audit(const PromptSpec& spec, int attempt, const std::string* response, const char* error) {
        if (!audit.is_open()) return;
        json line = {{"stage", std::string(to_string(spec.stage))},
                     {"backend", backend->name()},
                     {"attempt", attempt},
                     {"prompt", spec.text}};
        if (response != nullptr) line["response"] = *response;
        if (error != nullptr) line["error"] = error;
        std::lock_guard lock(audit_mu);
        audit << line.dump() << '\n';
        audit.flush();
    }
};

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : shared_(std::make_shared<Shared>()), ledger_(std::make_shared<RequestLedger>()) {
    if (!backend) throw ConfigError("gateway needs a backend");
    shared_->backend = std::move(backend);
    shared_->options = std::move(options);
    if (shared_->options.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
    if (shared_->options.audit_log) {
        shared_->audit.open(*shared_->options.audit_log, std::ios::app);
        if (!shared_->audit) throw IoError("cannot open audit log " + shared_->options.audit_log->string());
    }
}

Gateway::Gateway(std::shared_ptr<Shared> shared, std::shared_ptr<RequestLedger> ledger,
                 std::vector<std::shared_ptr<RequestLedger>> parents)
    : shared_(std::move(shared)), ledger_(std::move(ledger)), parents_(std::move(parents)) {}

Gateway Gateway::fork() const {
    auto parents = parents_;
    parents.push_back(ledger_);
    return Gateway(shared_, std::make_shared<RequestLedger>(), std::move(parents));
}

const Backend& Gateway::backend() const { return *shared_->backend; }

void Gateway::record_request(const PromptSpec& spec) {
    const std::string name = shared_->backend->name();
    ledger_->record_request(spec.stage, name, spec.text.size());
    for (const auto& p : parents_) p->record_request(spec.stage, name, spec.text.size());
}

void Gateway::record_failure(const PromptSpec& spec) {
    const std::string name = shared_->backend->name();
    ledger_->record_failure(spec.stage, name);
    for (const auto& p : parents_) p->record_failure(spec.stage, name);
}

std::string Gateway::complete(const PromptSpec& spec) {
    spec.validate();
    const RetryPolicy& retry = shared_->options.retry;
    auto backoff = retry.base_delay;
    for (int attempt = 1;; ++attempt) {
        shared_->acquire();
        record_request(spec);
        std::chrono::milliseconds wait = backoff;
        try {
            std::string response = shared_->backend->send(spec);
            shared_->release();
            shared_->write_audit(spec, attempt, &response, nullptr);
            return response;
        } catch (const BackendRefusal& e) {
            shared_->release();
            record_failure(spec);
            shared_->write_audit(spec, attempt, nullptr, e.what());
            throw;
        } catch (const RateLimited& e) {
            shared_->release();
            record_failure(spec);
            shared_->write_audit(spec, attempt, nullptr, e.what());
            if (attempt >= retry.max_attempts) throw;
            wait = std::max(backoff, e.retry_after());
            spdlog::warn("rate limited on {} (attempt {}), retrying in {} ms", shared_->backend->name(),
                         attempt, wait.count());
        } catch (const TransportError& e) {
            shared_->release();
            record_failure(spec);
            shared_->write_audit(spec, attempt, nullptr, e.what());
            if (attempt >= retry.max_attempts) throw;
            spdlog::warn("transport error on {} (attempt {}): {}", shared_->backend->name(), attempt, e.what());
        } catch (...) {
            shared_->release();
            record_failure(spec);
            throw;
        }
        shared_->sleep(wait);
        backoff = std::chrono::milliseconds(
            static_cast<std::int64_t>(static_cast<double>(backoff.count()) * retry.multiplier));
    }
}

namespace {

std::string format_reminder(const ResponseShape& shape) {
    if (shape.kind == ResponseShape::Kind::JsonArray) {
        return "Format reminder: answer with a single JSON object with '" + shape.keys.front() +
               "' as key holding a JSON array, and no other text.";
    }
    return "Format reminder: answer with a single JSON object with the keys " + text::join(shape.keys, ", ") +
           ", and no other text.";
}

} // namespace

json Gateway::complete_structured(const PromptSpec& spec, const Salvage& salvage) {
    if (spec.shape.kind == ResponseShape::Kind::FreeText) {
        throw ConfigError("complete_structured needs a JSON response shape");
    }
    auto interpret = [&](const std::string& raw) -> std::optional<json> {
        if (auto parsed = repair_json(raw)) {
            if (auto shaped = shape_response(*parsed, spec.shape)) return shaped;
        }
        if (salvage) {
            if (auto rescued = salvage(raw)) return shape_response(*rescued, spec.shape);
        }
        return std::nullopt;
    };

    const std::string first = complete(spec);
    if (auto out = interpret(first)) return *out;

    PromptSpec retry = spec;
    retry.text += "\n\n" + format_reminder(spec.shape);
    const std::string second = complete(retry);
    if (auto out = interpret(second)) return *out;
    throw UnparseableResponse("unparseable " + std::string(to_string(spec.stage)) + " response", second);
}

} // namespace ovdst
