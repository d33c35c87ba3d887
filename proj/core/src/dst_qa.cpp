#include "ovdst/dst_qa.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "ovdst/domain_classifier.hpp"
#include "ovdst/errors.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

using nlohmann::json;

const std::vector<EntityType>& base_entity_types() {
    static const std::vector<EntityType> types = {EntityType::Time, EntityType::Number,   EntityType::Price,
                                                  EntityType::Location, EntityType::Name, EntityType::Code,
                                                  EntityType::Boolean};
    return types;
}

const std::vector<EntityType>& extended_entity_types() {
    static const std::vector<EntityType> types = {EntityType::Day, EntityType::Type, EntityType::Range};
    return types;
}

json QaTurnTrace::to_json() const {
    json ents = json::array();
    for (const auto& e : entities) ents.push_back({{"type", std::string(to_string(e.entity_type))}, {"value", e.value}});
    json ms = json::array();
    for (const auto& m : matches) {
        ms.push_back({{"type", std::string(to_string(m.entity.entity_type))},
                      {"value", m.entity.value},
                      {"slots", m.candidate_slots}});
    }
    json qs = json::array();
    for (const auto& q : questions) qs.push_back({{"slot", q.slot_key}, {"options", q.options}});
    json ans = json::object();
    for (const auto& [k, v] : answers) ans[k] = v ? json(v->serialize()) : json(nullptr);
    return {{"entities", ents},
            {"matches", ms},
            {"dontcare", dontcare},
            {"questions", qs},
            {"answers", ans},
            {"requests",
             {{"extraction", extraction_requests}, {"dontcare", dontcare_requests}, {"mcq", mcq_requests}}}};
}

namespace {

std::string type_keys(const std::vector<EntityType>& types) {
    std::vector<std::string> names;
    for (auto t : types) names.emplace_back(to_string(t));
    return text::join(names, ", ");
}

std::string scalar_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return json(v).dump();
    return {};
}

void push_unique(std::vector<std::string>& out, const std::string& v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
}

std::vector<ExtractedEntity> run_extraction(const Turn& turn, const PromptAsset& asset,
                                            const std::vector<EntityType>& types, Gateway& gateway,
                                            const QaOptions& options) {
    PromptSpec spec;
    spec.text = asset.render({{"entities", type_keys(types)}, {"turn", turn.utterance}});
    spec.params = options.params;
    std::vector<std::string> keys;
    for (auto t : types) keys.emplace_back(to_string(t));
    spec.shape = ResponseShape::object(keys);
    spec.stage = Stage::EntityExtraction;
    try {
        auto value = gateway.complete_structured(spec);
        return parse_entity_response(value.dump(), types, turn.index);
    } catch (const UnparseableResponse& e) {
        spdlog::warn("entity extraction: turn {} unparseable, no entities", turn.index);
        return {};
    }
}

} // namespace

std::vector<ExtractedEntity> parse_entity_response(std::string_view raw, const std::vector<EntityType>& types,
                                                   std::size_t turn_index) {
    auto parsed = repair_json(raw);
    if (!parsed || !parsed->is_object()) throw UnparseableResponse("entity response is not a JSON object", std::string(raw));
    std::vector<ExtractedEntity> out;
    for (auto type : types) {
        const json* found = nullptr;
        for (const auto& [k, v] : parsed->items()) {
            if (text::iequals(text::trim(k), to_string(type))) {
                found = &v;
                break;
            }
        }
        if (found == nullptr || found->is_null()) continue;
        json items = found->is_array() ? *found : json::array({*found});
        for (const auto& item : items) {
            auto value = normalize_value(scalar_text(item), type);
            if (value.empty() || value == "none" || value == "null") continue;
            ExtractedEntity e{type, value, turn_index};
            if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(std::move(e));
        }
    }
    return out;
}

std::vector<ExtractedEntity> extract_entities(const Turn& turn, Gateway& gateway, const AssetLibrary& assets,
                                              const QaOptions& options) {
    auto out = run_extraction(turn, assets.get(Stage::EntityExtraction, "default"), base_entity_types(), gateway,
                              options);
    if (options.extended_entities) {
        auto more = run_extraction(turn, assets.get(Stage::EntityExtraction, "extended"), extended_entity_types(),
                                   gateway, options);
        for (auto& e : more) {
            if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(std::move(e));
        }
    }
    return out;
}

std::vector<EntitySlotMatch> match_entities_to_slots(const std::vector<ExtractedEntity>& entities,
                                                     const DomainSet& active_domains, const Schema& schema) {
    std::vector<EntitySlotMatch> out;
    for (const auto& e : entities) {
        EntitySlotMatch m{e, {}};
        for (const auto& domain : schema.domains()) {
            if (!active_domains.count(domain)) continue;
            for (const auto& slot : schema.slots(domain)) {
                if (!slot.matchable) continue;
                if (e.entity_type == EntityType::DontCare || slot.entity_type == e.entity_type) {
                    m.candidate_slots.push_back(make_key(domain, slot.name));
                }
            }
        }
        if (m.candidate_slots.empty()) {
            spdlog::debug("entity {}='{}' has no slot in the active domains", to_string(e.entity_type), e.value);
            continue;
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::set<std::string> detect_dontcare(const Turn& turn, const DomainSet& active_domains, const Schema& schema,
                                      Gateway& gateway, const AssetLibrary& assets, const QaOptions& options) {
    std::vector<std::string> keys;
    std::string slot_lines;
    for (const auto& domain : schema.domains()) {
        if (!active_domains.count(domain)) continue;
        for (const auto& slot : schema.slots(domain)) {
            if (!slot.matchable) continue;
            keys.push_back(make_key(domain, slot.name));
            slot_lines += "- " + keys.back() + ": " + slot.description + "\n";
        }
    }
    if (keys.empty()) return {};

    PromptSpec spec;
    spec.text = assets.get(Stage::DontCareDetection, "default")
                    .render({{"slots", slot_lines}, {"turn", "USER: " + turn.utterance}});
    spec.params = options.params;
    spec.shape = ResponseShape::array("dontcare");
    spec.stage = Stage::DontCareDetection;

    std::set<std::string> out;
    json value;
    try {
        value = gateway.complete_structured(spec, [](std::string_view raw) -> std::optional<json> {
            if (text::iequals(text::strip_punctuation(raw), "none")) return json::array();
            return std::nullopt;
        });
    } catch (const UnparseableResponse&) {
        spdlog::warn("dontcare detection: turn {} unparseable", turn.index);
        return out;
    }
    if (!value.is_array()) value = value.is_string() ? json::array({value}) : json::array();
    for (const auto& item : value) {
        if (!item.is_string()) continue;
        auto name = text::to_lower(text::trim(item.get<std::string>()));
        bool matched = false;
        for (const auto& key : keys) {
            if (name == key || name == mcq_answer_key(key)) {
                out.insert(key);
                matched = true;
                break;
            }
        }
        if (!matched && !name.empty() && name != "none") {
            spdlog::warn("dontcare detection: ignoring unknown slot '{}'", name);
        }
    }
    return out;
}

McqQuestion build_mcq(const std::string& slot_key, const std::vector<std::string>& entity_values,
                      const DialogueState& prior_state, bool dontcare_flagged, const Schema& schema,
                      std::size_t turn_index) {
    const SlotSchema* target = schema.find_slot(slot_key);
    if (target == nullptr) throw UnknownSlot(slot_key);
    McqQuestion q;
    q.slot_key = slot_key;
    q.turn_index = turn_index;
    for (const auto& v : entity_values) {
        if (!v.empty()) push_unique(q.options, v);
    }
    for (const auto& [key, value] : prior_state) {
        if (key == slot_key || !value.is_informed()) continue;
        const SlotSchema* other = schema.find_slot(key);
        if (other != nullptr && other->entity_type == target->entity_type) push_unique(q.options, value.text());
    }
    if (dontcare_flagged) push_unique(q.options, std::string(kDontCareOption));
    push_unique(q.options, std::string(kNoneOption));
    return q;
}

std::string mcq_answer_key(std::string_view slot_key) {
    std::string out(slot_key);
    std::replace(out.begin(), out.end(), '.', '-');
    return out;
}

std::optional<SlotValue> interpret_mcq_answer(const McqQuestion& question, const json& answer) {
    json v = answer;
    if (v.is_array()) v = v.empty() ? json(nullptr) : v.front();
    if (v.is_null()) return std::nullopt;
    const std::string raw = text::collapse_whitespace(scalar_text(v));
    const std::string norm = text::to_lower(text::strip_punctuation(raw));
    if (norm.empty() || norm == "none" || norm == "null") return std::nullopt;
    for (const auto& opt : question.options) {
        if (opt == kNoneOption) continue;
        if (text::to_lower(text::strip_punctuation(opt)) != norm) continue;
        if (opt == kDontCareOption) return SlotValue::dont_care();
        return SlotValue::informed(opt);
    }
    // letter-style answers such as "A" or "b)"
    if (norm.size() == 1 && norm[0] >= 'a' && norm[0] < 'a' + static_cast<char>(question.options.size())) {
        const auto& opt = question.options[static_cast<std::size_t>(norm[0] - 'a')];
        if (opt == kNoneOption) return std::nullopt;
        if (opt == kDontCareOption) return SlotValue::dont_care();
        return SlotValue::informed(opt);
    }
    spdlog::warn("mcq {}: answer '{}' is not an option, treated as absent", question.slot_key, raw);
    return std::nullopt;
}

std::string build_mcq_prompt(const McqQuestion& question, const std::vector<Turn>& dialogue_so_far,
                             const Schema& schema, const AssetLibrary& assets) {
    const SlotSchema* slot = schema.find_slot(question.slot_key);
    if (slot == nullptr) throw UnknownSlot(question.slot_key);
    auto [domain, name] = split_key(question.slot_key);
    std::string slot_name = domain + " " + name;
    std::replace(slot_name.begin(), slot_name.end(), '-', ' ');
    return assets.get(Stage::McqAnswering, "default")
        .render({{"dialgoue", text::trim(render_turns(dialogue_so_far))},
                 {"slotname", slot_name},
                 {"turnindex", std::to_string(question.turn_index)},
                 {"slotvalues", json(question.options).dump()},
                 {"slotkey", mcq_answer_key(question.slot_key)}});
}

std::optional<SlotValue> answer_mcq(const McqQuestion& question, const std::vector<Turn>& dialogue_so_far,
                                    const Schema& schema, Gateway& gateway, const AssetLibrary& assets,
                                    const QaOptions& options) {
    const std::string key = mcq_answer_key(question.slot_key);
    PromptSpec spec;
    spec.text = build_mcq_prompt(question, dialogue_so_far, schema, assets);
    spec.params = options.params;
    spec.shape = ResponseShape::object({key});
    spec.stage = Stage::McqAnswering;
    json value;
    try {
        value = gateway.complete_structured(spec, [&](std::string_view raw) -> std::optional<json> {
            auto bare = text::trim(raw);
            if (bare.empty() || bare.find('\n') != std::string::npos || bare.size() > 200) return std::nullopt;
            return json{{key, text::strip_punctuation(bare)}};
        });
    } catch (const UnparseableResponse&) {
        spdlog::warn("mcq {}: unparseable answer, treated as absent", question.slot_key);
        return std::nullopt;
    }
    json answer = nullptr;
    for (const auto& [k, v] : value.items()) {
        if (text::iequals(k, key) || text::iequals(k, question.slot_key)) {
            if (!v.is_null()) answer = v;
        }
    }
    if (answer.is_null() && value.size() == 2) {
        // a single differently-named key next to the injected null
        for (const auto& [k, v] : value.items()) {
            if (!v.is_null()) answer = v;
        }
    }
    return interpret_mcq_answer(question, answer);
}

QaTurnResult qa_track_turn(const Turn& turn, const std::vector<Turn>& history, const DomainSet& active_domains,
                           const DialogueState& prior_state, const Schema& schema, Gateway& gateway,
                           const AssetLibrary& assets, const QaOptions& options) {
    if (turn.speaker != Speaker::User) throw ConfigError("qa_track_turn needs a user turn");
    QaTurnResult result;
    auto& trace = result.trace;

    const auto before = gateway.ledger().total_requests();
    trace.entities = extract_entities(turn, gateway, assets, options);
    trace.extraction_requests = gateway.ledger().total_requests() - before;

    trace.matches = match_entities_to_slots(trace.entities, active_domains, schema);

    if (options.dontcare_scan && !active_domains.empty()) {
        const auto mark = gateway.ledger().total_requests();
        trace.dontcare = detect_dontcare(turn, active_domains, schema, gateway, assets, options);
        trace.dontcare_requests = gateway.ledger().total_requests() - mark;
    }

    std::map<std::string, std::vector<std::string>> values;
    for (const auto& m : trace.matches) {
        for (const auto& key : m.candidate_slots) push_unique(values[key], m.entity.value);
    }
    for (const auto& key : trace.dontcare) values[key];
    for (const auto& domain : active_domains) {
        if (!schema.has_domain(domain)) continue;
        for (const auto& slot : schema.slots(domain)) {
            if (!slot.matchable) continue;
            const auto key = make_key(domain, slot.name);
            if (prior_state.contains(key) || values.count(key)) continue;
            for (const auto& [other, value] : prior_state) {
                if (other == key || !value.is_informed()) continue;
                const SlotSchema* s = schema.find_slot(other);
                if (s != nullptr && s->entity_type == slot.entity_type) {
                    values[key];
                    break;
                }
            }
        }
    }

    std::vector<Turn> dialogue = history;
    dialogue.push_back(turn);
    for (const auto& [key, vals] : values) {
        auto q = build_mcq(key, vals, prior_state, trace.dontcare.count(key) != 0, schema, turn.index);
        if (q.options.size() < 2) continue;
        const auto mark = gateway.ledger().total_requests();
        auto answer = answer_mcq(q, dialogue, schema, gateway, assets, options);
        trace.mcq_requests += gateway.ledger().total_requests() - mark;
        trace.answers[key] = answer;
        if (answer) result.delta.set(key, *answer);
        trace.questions.push_back(std::move(q));
    }
    return result;
}

} // namespace ovdst
