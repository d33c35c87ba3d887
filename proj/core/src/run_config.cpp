#include <algorithm>
#include <cctype>
#include <numeric>
#include <random>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <fstream>

#include "ovdst/errors.hpp"
#include "ovdst/pipeline.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

namespace fs = std::filesystem;

std::string_view to_string(DatasetKind k) {
    switch (k) {
    case DatasetKind::Multiwoz21: return "multiwoz-2.1";
    case DatasetKind::Multiwoz24: return "multiwoz-2.4";
    case DatasetKind::Sgd: return "sgd";
    }
    return "?";
}

std::string_view to_string(Method m) { return m == Method::QA ? "qa" : "srp"; }

std::string_view to_string(DomainSource d) { return d == DomainSource::Gold ? "gold" : "predicted"; }

void RunConfig::validate() const {
    if (data_path.empty()) throw ConfigError("run.data_path is required");
    if (output_dir.empty()) throw ConfigError("run.output_dir is required");
    if (workers == 0) throw ConfigError("run.workers must be at least 1");
    if (dialogue_limit && *dialogue_limit == 0) throw ConfigError("run.dialogue_limit must be positive");
    if (backend != "mock" && backend != "openai" && backend != "compatible") {
        throw ConfigError("backend.kind must be mock, openai or compatible, got '" + backend + "'");
    }
    if (backend == "mock" && mock_script.empty()) throw ConfigError("the mock backend needs backend.mock_script");
    if (backend == "compatible" && base_url.empty()) throw ConfigError("backend.base_url is required");
    if (model.empty()) throw ConfigError("backend.model is required");
    if (fuzzy_threshold <= 0 || fuzzy_threshold > 1) throw ConfigError("eval.fuzzy_threshold must be in (0, 1]");
    sampling(Stage::DomainClassification).validate();
    sampling(Stage::SrpTracking).validate();
}

SamplingParams RunConfig::sampling(Stage stage) const {
    SamplingParams p = default_sampling(model, stage);
    if (temperature) p.temperature = *temperature;
    if (top_p) p.top_p = *top_p;
    p.max_tokens = max_tokens;
    return p;
}

namespace {

bool parse_bool(std::string_view key, std::string_view v) {
    const auto s = text::to_lower(text::trim(v));
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(std::string(key) + ": expected a boolean, got '" + std::string(v) + "'");
}

double parse_double(std::string_view key, std::string_view v) {
    try {
        std::size_t used = 0;
        const std::string s = text::trim(v);
        double d = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
    }
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
    const std::string s = text::trim(v);
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
        throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
    }
    return std::stoull(s);
}

// "value ; note" and "value # note" drop the note
std::string strip_inline_comment(std::string v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if ((v[i] == ';' || v[i] == '#') && std::isspace(static_cast<unsigned char>(v[i - 1]))) {
            v.erase(i);
            break;
        }
    }
    return text::trim(v);
}

using Setter = void (*)(RunConfig&, std::string_view, std::string_view);

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"run.dataset",
         [](RunConfig& c, std::string_view k, std::string_view v) {
             const auto s = text::to_lower(text::trim(v));
             if (s == "multiwoz-2.1") c.dataset = DatasetKind::Multiwoz21;
             else if (s == "multiwoz-2.4") c.dataset = DatasetKind::Multiwoz24;
             else if (s == "sgd") c.dataset = DatasetKind::Sgd;
             else throw ConfigError(std::string(k) + ": unknown dataset '" + s + "'");
         }},
        {"run.data_path", [](RunConfig& c, std::string_view, std::string_view v) { c.data_path = text::trim(v); }},
        {"run.method",
         [](RunConfig& c, std::string_view k, std::string_view v) {
             const auto s = text::to_lower(text::trim(v));
             if (s == "qa") c.method = Method::QA;
             else if (s == "srp") c.method = Method::SRP;
             else throw ConfigError(std::string(k) + ": method must be qa or srp");
         }},
        {"run.domains",
         [](RunConfig& c, std::string_view k, std::string_view v) {
             const auto s = text::to_lower(text::trim(v));
             if (s == "gold") c.domains = DomainSource::Gold;
             else if (s == "predicted" || s == "pred") c.domains = DomainSource::Predicted;
             else throw ConfigError(std::string(k) + ": domains must be gold or predicted");
         }},
        {"run.with_ontology",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.with_ontology = parse_bool(k, v); }},
        {"run.dialogue_limit",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.dialogue_limit = parse_uint(k, v); }},
        {"run.seed", [](RunConfig& c, std::string_view k, std::string_view v) { c.seed = parse_uint(k, v); }},
        {"run.output_dir", [](RunConfig& c, std::string_view, std::string_view v) { c.output_dir = text::trim(v); }},
        {"run.asset_dir", [](RunConfig& c, std::string_view, std::string_view v) { c.asset_dir = text::trim(v); }},
        {"run.workers",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.workers = parse_uint(k, v); }},
        {"run.force", [](RunConfig& c, std::string_view k, std::string_view v) { c.force = parse_bool(k, v); }},
        {"backend.kind", [](RunConfig& c, std::string_view, std::string_view v) { c.backend = text::to_lower(text::trim(v)); }},
        {"backend.model", [](RunConfig& c, std::string_view, std::string_view v) { c.model = text::trim(v); }},
        {"backend.base_url", [](RunConfig& c, std::string_view, std::string_view v) { c.base_url = text::trim(v); }},
        {"backend.api_key_env",
         [](RunConfig& c, std::string_view, std::string_view v) { c.api_key_env = text::trim(v); }},
        {"backend.mock_script",
         [](RunConfig& c, std::string_view, std::string_view v) { c.mock_script = text::trim(v); }},
        {"backend.requests_per_minute",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.requests_per_minute = parse_double(k, v); }},
        {"backend.max_concurrency",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.max_concurrency = parse_uint(k, v); }},
        {"sampling.temperature",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.temperature = parse_double(k, v); }},
        {"sampling.top_p", [](RunConfig& c, std::string_view k, std::string_view v) { c.top_p = parse_double(k, v); }},
        {"sampling.max_tokens",
         [](RunConfig& c, std::string_view k, std::string_view v) {
             c.max_tokens = static_cast<int>(parse_uint(k, v));
         }},
        {"qa.extended_entities",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.qa_extended_entities = parse_bool(k, v); }},
        {"qa.dontcare_scan",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.qa_dontcare_scan = parse_bool(k, v); }},
        {"eval.fuzzy_threshold",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.fuzzy_threshold = parse_double(k, v); }},
    };
    return table;
}

} // namespace

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    it->second(config, key, value);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, _] : setters()) keys.push_back(k);
    return keys;
}

RunConfig load_run_config(const fs::path& path) { return load_run_config(path, RunConfig{}); }

RunConfig load_run_config(const fs::path& path, RunConfig base) {
    if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(path.string() + ": key '" + section + "' is outside any section");
        for (const auto& [key, value] : body) {
            set_config_value(base, section + "." + key, strip_inline_comment(value.get_value<std::string>()));
        }
    }
    return base;
}

Corpus load_corpus(const RunConfig& config) {
    switch (config.dataset) {
    case DatasetKind::Multiwoz21: return load_multiwoz(config.data_path, MultiwozVersion::V21);
    case DatasetKind::Multiwoz24: return load_multiwoz(config.data_path, MultiwozVersion::V24);
    case DatasetKind::Sgd: return load_sgd(config.data_path);
    }
    throw ConfigError("unknown dataset");
}

std::shared_ptr<Backend> make_backend(const RunConfig& config) {
    if (config.backend == "mock") {
        std::ifstream in(config.mock_script);
        if (!in) throw IoError("cannot open mock script " + config.mock_script.string());
        auto script = nlohmann::json::parse(in, nullptr, false);
        if (script.is_discarded()) throw FormatError("mock script is not valid JSON: " + config.mock_script.string());
        return MockBackend::from_json(script);
    }
    HttpBackendConfig http;
    http.name = config.backend;
    http.model = config.model;
    if (config.backend == "compatible") {
        http.base_url = config.base_url;
        http.api_key_env = config.api_key_env.empty() ? "OVDST_API_KEY" : config.api_key_env;
    } else {
        if (!config.base_url.empty()) http.base_url = config.base_url;
        http.api_key_env = config.api_key_env.empty() ? "OPENAI_API_KEY" : config.api_key_env;
    }
    return make_http_backend(http);
}

std::vector<std::size_t> select_dialogues(std::size_t available, const RunConfig& config) {
    std::vector<std::size_t> idx(available);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (!config.dialogue_limit || *config.dialogue_limit >= available) return idx;
    if (config.seed) {
        std::mt19937_64 rng(*config.seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(*config.dialogue_limit);
        std::sort(idx.begin(), idx.end());
    } else {
        idx.resize(*config.dialogue_limit);
    }
    return idx;
}

} // namespace ovdst
