#include "ovdst/dst_srp.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "ovdst/domain_classifier.hpp"
#include "ovdst/errors.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

using nlohmann::json;

SrpRendering render_srp(std::string_view domain, const Schema& schema, const PromptAsset& asset,
                        bool with_ontology) {
    const auto& slots = schema.slots(domain);
    if (with_ontology && !schema.has_ontology(domain)) {
        throw MissingOntology("no ontology values for domain " + std::string(domain));
    }
    SrpRendering r;
    r.domain = std::string(domain);
    r.model_key = asset.model_key;
    r.regulations = asset.template_text;
    for (const auto& s : slots) {
        r.slot_block += "- " + s.name + ": " + s.description;
        if (with_ontology && !s.ontology.empty()) {
            r.slot_block += ", possible values: [" + text::join(s.ontology, ", ") + "]";
        }
        r.slot_block += '\n';
    }
    if (!r.slot_block.empty()) r.slot_block.pop_back();
    return r;
}

PromptSpec build_srp_prompt(std::string_view domain, const Schema& schema, const AssetLibrary& assets,
                            const std::vector<Turn>& dialogue_so_far, const SrpOptions& options,
                            const DialogueState& prior_state) {
    const PromptAsset& asset = assets.srp_asset(options.model);
    SrpRendering r = render_srp(domain, schema, asset, options.with_ontology);

    std::vector<std::string> names;
    for (const auto& s : schema.slots(domain)) names.push_back(s.name);
    const std::string name_list = text::join(names, ", ");

    std::string out = asset.render({{"slots", r.slot_block},
                                    {"domain", r.domain},
                                    {"slotnames", name_list},
                                    {"slotsnames", name_list}});

    out += "\n\n" + text::trim(render_turns(dialogue_so_far)) + "\n";

    // Last turn pair: the newest user turn and the system turn before it.
    std::vector<Turn> pair;
    if (!dialogue_so_far.empty()) {
        const std::size_t n = dialogue_so_far.size();
        if (n >= 2 && dialogue_so_far[n - 2].speaker == Speaker::System) pair.push_back(dialogue_so_far[n - 2]);
        pair.push_back(dialogue_so_far[n - 1]);
    }
    out += "\nLast turn pair:\n" + text::trim(render_turns(pair)) + "\n";

    if (asset.template_text.find("another domain") != std::string::npos) {
        std::string known;
        for (const auto& [key, value] : prior_state) {
            if (!value.is_informed() || split_key(key).first == domain) continue;
            known += "- " + key + ": " + value.text() + "\n";
        }
        if (!known.empty()) out += "\nKnown values from other domains:\n" + known;
    }

    PromptSpec spec;
    spec.text = std::move(out);
    spec.params = options.params;
    spec.shape = ResponseShape::object(names);
    spec.stage = Stage::SrpTracking;
    return spec;
}

namespace {

std::string value_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return v.dump();
    if (v.is_array() && v.size() == 1) return value_text(v.front());
    return {};
}

// Resolves a response key to a qualified slot in `domain`, or "".
std::string resolve_key(std::string_view raw_key, const std::set<std::string>& expected, std::string_view domain) {
    std::string k = text::to_lower(text::trim(raw_key));
    std::replace(k.begin(), k.end(), '_', '-');
    std::replace(k.begin(), k.end(), ' ', '-');
    const std::string dom(domain);
    std::vector<std::string> tries = {k, dom + "." + k};
    if (k.starts_with(dom + "-")) tries.push_back(dom + "." + k.substr(dom.size() + 1));
    for (const auto& t : tries) {
        if (expected.count(t)) return t;
    }
    return {};
}

} // namespace

SrpParse parse_srp_response(std::string_view raw, const std::set<std::string>& expected_slots,
                            std::string_view domain, const Schema& schema) {
    if (expected_slots.empty()) throw ConfigError("parse_srp_response needs expected slots");
    auto parsed = repair_json(raw);
    if (!parsed || !parsed->is_object()) {
        throw UnparseableResponse("SRP response is not a JSON object", std::string(raw));
    }
    // {"hotel": {...}} nesting under the domain name
    json obj = *parsed;
    if (obj.size() == 1 && obj.begin()->is_object() && text::iequals(obj.begin().key(), domain)) {
        obj = json(*obj.begin());
    }
    SrpParse out;
    for (const auto& [k, v] : obj.items()) {
        const std::string key = resolve_key(k, expected_slots, domain);
        if (key.empty()) {
            out.dropped.push_back(k + ": unknown slot");
            continue;
        }
        const std::string t = text::trim(value_text(v));
        const std::string lower = text::to_lower(t);
        if (t.empty() || lower == "null" || lower == "none" || lower == "not mentioned") {
            out.dropped.push_back(k + ": empty value");
            continue;
        }
        if (t == "?") {
            out.delta.set(key, SlotValue::requested());
        } else if (t == "*") {
            out.delta.set(key, SlotValue::dont_care());
        } else {
            const SlotSchema* s = schema.find_slot(key);
            auto norm = normalize_value(t, s ? s->entity_type : EntityType::Name);
            if (norm.empty()) {
                out.dropped.push_back(k + ": empty value");
                continue;
            }
            out.delta.set(key, SlotValue::informed(norm));
        }
    }
    for (const auto& d : out.dropped) spdlog::debug("srp {}: dropped {}", domain, d);
    return out;
}

SrpTurnResult srp_track_turn(const Turn& user_turn, const std::vector<Turn>& history,
                             const DomainSet& active_domains, const DialogueState& prior_state,
                             const Schema& schema, Gateway& gateway, const AssetLibrary& assets,
                             const SrpOptions& options) {
    if (user_turn.speaker != Speaker::User) throw ConfigError("srp_track_turn needs a user turn");
    SrpTurnResult result;
    std::vector<Turn> dialogue = history;
    dialogue.push_back(user_turn);

    for (const auto& domain : schema.domains()) {
        if (!active_domains.count(domain)) continue;
        PromptSpec spec = build_srp_prompt(domain, schema, assets, dialogue, options, prior_state);
        std::set<std::string> expected;
        for (const auto& key : schema.slot_keys(domain)) expected.insert(key);

        const auto mark = gateway.ledger().total_requests();
        try {
            const std::string raw = gateway.complete(spec);
            SrpParse parse;
            try {
                parse = parse_srp_response(raw, expected, domain, schema);
            } catch (const UnparseableResponse&) {
                // one reprompt with a format reminder, as the gateway does for structured calls
                PromptSpec retry = spec;
                retry.text += "\n\nFormat reminder: answer with a single JSON object keyed by slot name, "
                              "and no other text.";
                parse = parse_srp_response(gateway.complete(retry), expected, domain, schema);
            }
            result.full_delta = merge_states(result.full_delta, parse.delta);
        } catch (const UnparseableResponse& e) {
            spdlog::warn("srp {} turn {}: unparseable response", domain, user_turn.index);
            result.failed_domains.push_back(domain);
        } catch (const TransportError& e) {
            spdlog::warn("srp {} turn {}: {}", domain, user_turn.index, e.what());
            result.failed_domains.push_back(domain);
        } catch (const RateLimited& e) {
            spdlog::warn("srp {} turn {}: {}", domain, user_turn.index, e.what());
            result.failed_domains.push_back(domain);
        } catch (const BackendRefusal& e) {
            spdlog::warn("srp {} turn {}: {}", domain, user_turn.index, e.what());
            result.failed_domains.push_back(domain);
        }
        result.requests += gateway.ledger().total_requests() - mark;
    }
    for (const auto& d : active_domains) {
        if (!schema.has_domain(d)) spdlog::warn("srp: active domain '{}' is not in the schema", d);
    }
    result.delta = result.full_delta.without_requested();
    return result;
}

} // namespace ovdst
