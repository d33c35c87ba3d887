#include "ovdst/domain_classifier.hpp"

#include <spdlog/spdlog.h>

#include "ovdst/errors.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

std::string render_turns(const std::vector<Turn>& turns) {
    std::string out;
    for (const auto& t : turns) {
        out += t.speaker == Speaker::User ? "USER: " : "SYSTEM: ";
        out += t.utterance;
        out += '\n';
    }
    return out;
}

namespace {

bool is_none_literal(const nlohmann::json& j) {
    return j.is_null() || (j.is_string() && text::iequals(text::trim(j.get<std::string>()), "none"));
}

DomainSet filter_domains(const nlohmann::json& value, const Schema& schema) {
    DomainSet out;
    if (is_none_literal(value)) return out;
    nlohmann::json items = value.is_array() ? value : nlohmann::json::array({value});
    for (const auto& item : items) {
        if (!item.is_string()) continue;
        auto name = text::to_lower(text::trim(item.get<std::string>()));
        if (name.empty() || name == "none") continue;
        if (schema.has_domain(name)) {
            out.insert(name);
        } else {
            spdlog::warn("domain classifier: dropping unknown domain '{}'", name);
        }
    }
    return out;
}

} // namespace

DomainSet parse_domain_response(std::string_view raw, const Schema& schema) {
    if (text::iequals(text::strip_punctuation(raw), "none")) return {};
    auto parsed = repair_json(raw);
    if (!parsed) throw UnparseableResponse("domain response is not JSON", std::string(raw));
    if (parsed->is_array()) return filter_domains(*parsed, schema);
    if (parsed->is_object()) {
        for (const auto& [k, v] : parsed->items()) {
            if (text::iequals(k, "domains") && (v.is_array() || v.is_string() || v.is_null())) {
                return filter_domains(v, schema);
            }
        }
    }
    throw UnparseableResponse("domain response has no 'domains' list", std::string(raw));
}

std::string build_domain_prompt(const Turn& turn, const std::vector<Turn>& history, const Schema& schema,
                                const AssetLibrary& assets, const ClassifierOptions& options) {
    const auto& asset = assets.get(Stage::DomainClassification, "default");
    std::string prompt = asset.render({{"domains", text::join(schema.domains(), ", ")}});

    std::size_t first = 0;
    if (options.max_history_chars > 0) {
        auto size_from = [&](std::size_t start) {
            std::size_t n = 0;
            for (std::size_t i = start; i < history.size(); ++i) n += history[i].utterance.size() + 9;
            return n;
        };
        while (first < history.size() && size_from(first) > options.max_history_chars) {
            first += 2;
        }
        first = std::min(first, history.size());
    }
    std::vector<Turn> shown(history.begin() + static_cast<std::ptrdiff_t>(first), history.end());
    shown.push_back(turn);
    prompt += "\n\n";
    prompt += render_turns(shown);
    return prompt;
}

TurnDomainPrediction classify_turn(const Turn& turn, const std::vector<Turn>& history, const Schema& schema,
                                   Gateway& gateway, const AssetLibrary& assets,
                                   const std::optional<TurnDomainPrediction>& previous,
                                   const ClassifierOptions& options) {
    if (turn.speaker != Speaker::User) throw ConfigError("classify_turn needs a user turn");
    PromptSpec spec;
    spec.text = build_domain_prompt(turn, history, schema, assets, options);
    spec.params = options.params;
    spec.shape = ResponseShape::array("domains");
    spec.stage = Stage::DomainClassification;

    TurnDomainPrediction pred;
    pred.turn_index = turn.index;
    try {
        auto value = gateway.complete_structured(spec, [&](std::string_view raw) -> std::optional<nlohmann::json> {
            if (text::iequals(text::strip_punctuation(raw), "none")) return nlohmann::json::array();
            return std::nullopt;
        });
        pred.domains = filter_domains(value, schema);
    } catch (const UnparseableResponse& e) {
        pred.fallback = true;
        if (previous) pred.domains = previous->domains;
        spdlog::warn("domain classifier: turn {} unparseable, falling back to {} domain(s)", turn.index,
                     pred.domains.size());
    }
    return pred;
}

} // namespace ovdst
