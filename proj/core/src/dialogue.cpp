#include "ovdst/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <regex>

#include "ovdst/errors.hpp"
#include "ovdst/text.hpp"

namespace ovdst {

std::string_view to_string(Speaker s) { return s == Speaker::User ? "USER" : "SYSTEM"; }

SlotValue SlotValue::informed(std::string text) {
    if (text::trim(text).empty()) throw FormatError("informed slot value must be non-empty");
    return SlotValue(Kind::Informed, std::move(text));
}

SlotValue SlotValue::parse(std::string_view serialized) {
    if (serialized == "*") return dont_care();
    if (serialized == "?") return requested();
    return informed(std::string(serialized));
}

std::string SlotValue::serialize() const {
    switch (kind_) {
    case Kind::DontCare: return "*";
    case Kind::Requested: return "?";
    case Kind::Informed: break;
    }
    return text_;
}

const SlotValue* DialogueState::find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

void DialogueState::set(std::string key, SlotValue value) {
    entries_.insert_or_assign(std::move(key), std::move(value));
}

DialogueState DialogueState::restricted_to_domain(std::string_view domain) const {
    Map out;
    for (const auto& [k, v] : entries_) {
        auto dot = k.find('.');
        if (dot != std::string::npos && std::string_view(k).substr(0, dot) == domain) out.emplace(k, v);
    }
    return DialogueState(std::move(out));
}

DialogueState DialogueState::without_requested() const {
    Map out;
    for (const auto& [k, v] : entries_) {
        if (!v.is_requested()) out.emplace(k, v);
    }
    return DialogueState(std::move(out));
}

std::vector<std::size_t> Dialogue::user_turn_positions() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (turns[i].speaker == Speaker::User) out.push_back(i);
    }
    return out;
}

std::size_t Dialogue::user_turn_count() const {
    return static_cast<std::size_t>(std::count_if(
        turns.begin(), turns.end(), [](const Turn& t) { return t.speaker == Speaker::User; }));
}

void Dialogue::validate() const {
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (turns[i].index != i) {
            throw FormatError("dialogue " + id + ": turn indices must be consecutive from 0");
        }
        const Speaker expected = i % 2 == 0 ? Speaker::User : Speaker::System;
        if (turns[i].speaker != expected) {
            throw FormatError("dialogue " + id + ": speakers must alternate starting with USER");
        }
    }
    const std::size_t users = user_turn_count();
    if (gold_turn_domains && gold_turn_domains->size() != users) {
        throw FormatError("dialogue " + id + ": gold_turn_domains must have one entry per user turn");
    }
    if (gold_states && gold_states->size() != users) {
        throw FormatError("dialogue " + id + ": gold_states must have one entry per user turn");
    }
}

namespace {

struct EntityName {
    EntityType type;
    std::string_view name;
};

constexpr EntityName kEntityNames[] = {
    {EntityType::Time, "TIME"},         {EntityType::Number, "NUMBER"},
    {EntityType::Price, "PRICE"},       {EntityType::Location, "LOCATION"},
    {EntityType::Name, "NAME"},         {EntityType::Code, "CODE"},
    {EntityType::Boolean, "BOOLEAN"},   {EntityType::Day, "DAY"},
    {EntityType::Type, "TYPE"},         {EntityType::Range, "RANGE"},
    {EntityType::DontCare, "DONTCARE"},
};

bool valid_name(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    });
}

} // namespace

std::string_view to_string(EntityType t) {
    for (const auto& e : kEntityNames) {
        if (e.type == t) return e.name;
    }
    return "NAME";
}

std::optional<EntityType> entity_type_from_string(std::string_view s) {
    for (const auto& e : kEntityNames) {
        if (text::iequals(e.name, s)) return e.type;
    }
    return std::nullopt;
}

void Schema::add_domain(std::string domain, std::vector<SlotSchema> slots) {
    if (!valid_name(domain)) throw FormatError("invalid domain name: '" + domain + "'");
    if (has_domain(domain)) throw FormatError("duplicate domain: " + domain);
    std::set<std::string> seen;
    for (const auto& s : slots) {
        if (!valid_name(s.name)) throw FormatError("invalid slot name: '" + s.name + "'");
        if (!seen.insert(s.name).second) {
            throw FormatError("duplicate slot " + s.name + " in domain " + domain);
        }
    }
    domain_order_.push_back(domain);
    slots_.emplace(std::move(domain), std::move(slots));
}

bool Schema::has_domain(std::string_view domain) const { return slots_.find(domain) != slots_.end(); }

const std::vector<SlotSchema>& Schema::slots(std::string_view domain) const {
    auto it = slots_.find(domain);
    if (it == slots_.end()) throw SchemaMismatch("unknown domain: " + std::string(domain));
    return it->second;
}

const SlotSchema* Schema::find_slot(std::string_view key) const {
    auto dot = key.find('.');
    if (dot == std::string_view::npos) return nullptr;
    auto it = slots_.find(key.substr(0, dot));
    if (it == slots_.end()) return nullptr;
    auto slot = key.substr(dot + 1);
    for (const auto& s : it->second) {
        if (s.name == slot) return &s;
    }
    return nullptr;
}

SlotSchema* Schema::find_slot_mut(std::string_view key) {
    return const_cast<SlotSchema*>(std::as_const(*this).find_slot(key));
}

std::vector<std::string> Schema::slot_keys() const {
    std::vector<std::string> out;
    for (const auto& d : domain_order_) {
        auto keys = slot_keys(d);
        out.insert(out.end(), keys.begin(), keys.end());
    }
    return out;
}

std::vector<std::string> Schema::slot_keys(std::string_view domain) const {
    std::vector<std::string> out;
    for (const auto& s : slots(domain)) out.push_back(make_key(domain, s.name));
    return out;
}

std::size_t Schema::slot_count() const {
    std::size_t n = 0;
    for (const auto& [_, s] : slots_) n += s.size();
    return n;
}

bool Schema::has_ontology(std::string_view domain) const {
    const auto& s = slots(domain);
    return std::any_of(s.begin(), s.end(), [](const SlotSchema& x) { return !x.ontology.empty(); });
}

std::string make_key(std::string_view domain, std::string_view slot) {
    std::string k(domain);
    k.push_back('.');
    k.append(slot);
    return k;
}

std::pair<std::string, std::string> split_key(std::string_view key) {
    auto dot = key.find('.');
    if (dot == std::string_view::npos) throw FormatError("slot key without domain: " + std::string(key));
    return {std::string(key.substr(0, dot)), std::string(key.substr(dot + 1))};
}

std::string normalize_time(std::string_view raw) {
    static const std::regex clock(R"(^(\d{1,2})(?:[:.](\d{2}))?\s*(?:([ap])\.?\s?m\.?)?$)",
                                  std::regex::icase);
    const std::string trimmed = text::trim(raw);
    const std::string lowered = text::to_lower(trimmed);
    if (lowered == "noon" || lowered == "midday") return "12:00";
    if (lowered == "midnight") return "00:00";

    std::smatch m;
    if (!std::regex_match(trimmed, m, clock)) return std::string(raw);
    const bool has_minutes = m[2].matched;
    const bool has_meridiem = m[3].matched;
    if (!has_minutes && !has_meridiem) return std::string(raw);  // a bare number is not a time

    int hour = std::stoi(m[1].str());
    const int minute = has_minutes ? std::stoi(m[2].str()) : 0;
    if (minute > 59) return std::string(raw);
    if (has_meridiem) {
        if (hour < 1 || hour > 12) return std::string(raw);
        const bool pm = std::tolower(static_cast<unsigned char>(m[3].str()[0])) == 'p';
        hour %= 12;
        if (pm) hour += 12;
    } else if (hour > 23) {
        return std::string(raw);
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%02d:%02d", hour, minute);
    return buf;
}

std::string normalize_value(std::string_view raw, EntityType type) {
    std::string v = text::strip_punctuation(text::collapse_whitespace(text::to_lower(raw)));
    if (type == EntityType::Time) v = normalize_time(v);
    return v;
}

DialogueState merge_states(const DialogueState& state, const DialogueState& delta) {
    DialogueState::Map out = state.entries();
    for (const auto& [k, v] : delta) out.insert_or_assign(k, v);
    return DialogueState(std::move(out));
}

DialogueState apply_turn_update(const DialogueState& state, const DialogueState& delta,
                                const Schema& schema) {
    for (const auto& [k, _] : delta) {
        if (!schema.has_slot(k)) throw UnknownSlot(k);
    }
    return merge_states(state, delta);
}

DialogueState state_diff(const DialogueState& prev, const DialogueState& next) {
    DialogueState::Map out;
    for (const auto& [k, v] : next) {
        const SlotValue* old = prev.find(k);
        if (old == nullptr || !(*old == v)) out.emplace(k, v);
    }
    return DialogueState(std::move(out));
}

nlohmann::json state_to_json(const DialogueState& state) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : state) j[k] = v.serialize();
    return j;
}

DialogueState state_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw FormatError("dialogue state must be a JSON object");
    DialogueState::Map out;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) throw FormatError("state value for " + k + " must be a string");
        out.emplace(k, SlotValue::parse(v.get<std::string>()));
    }
    return DialogueState(std::move(out));
}

nlohmann::json schema_to_json(const Schema& schema) {
    nlohmann::json domains = nlohmann::json::array();
    for (const auto& d : schema.domains()) {
        nlohmann::json slots = nlohmann::json::array();
        for (const auto& s : schema.slots(d)) {
            nlohmann::json js = {{"name", s.name},
                                 {"description", s.description},
                                 {"entity_type", std::string(to_string(s.entity_type))}};
            if (!s.ontology.empty()) js["ontology"] = s.ontology;
            if (!s.matchable) js["matchable"] = false;
            slots.push_back(std::move(js));
        }
        domains.push_back({{"domain", d}, {"slots", std::move(slots)}});
    }
    return domains;
}

Schema schema_from_json(const nlohmann::json& j) {
    Schema schema;
    for (const auto& jd : j) {
        std::vector<SlotSchema> slots;
        for (const auto& js : jd.at("slots")) {
            SlotSchema s;
            s.name = js.at("name").get<std::string>();
            s.description = js.value("description", "");
            auto t = entity_type_from_string(js.at("entity_type").get<std::string>());
            if (!t) throw FormatError("unknown entity type for slot " + s.name);
            s.entity_type = *t;
            s.ontology = js.value("ontology", std::vector<std::string>{});
            s.matchable = js.value("matchable", true);
            slots.push_back(std::move(s));
        }
        schema.add_domain(jd.at("domain").get<std::string>(), std::move(slots));
    }
    return schema;
}

nlohmann::json domains_to_json(const DomainSet& d) { return nlohmann::json(std::vector<std::string>(d.begin(), d.end())); }

nlohmann::json dialogue_to_json(const Dialogue& d) {
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : d.turns) {
        turns.push_back({{"index", t.index},
                         {"speaker", std::string(to_string(t.speaker))},
                         {"utterance", t.utterance}});
    }
    nlohmann::json j = {{"id", d.id}, {"turns", std::move(turns)}};
    if (d.gold_turn_domains) {
        nlohmann::json gd = nlohmann::json::array();
        for (const auto& s : *d.gold_turn_domains) gd.push_back(domains_to_json(s));
        j["gold_turn_domains"] = std::move(gd);
    }
    if (d.gold_states) {
        nlohmann::json gs = nlohmann::json::array();
        for (const auto& s : *d.gold_states) gs.push_back(state_to_json(s));
        j["gold_states"] = std::move(gs);
    }
    return j;
}

Dialogue dialogue_from_json(const nlohmann::json& j) {
    Dialogue d;
    d.id = j.at("id").get<std::string>();
    for (const auto& jt : j.at("turns")) {
        Turn t;
        t.index = jt.at("index").get<std::size_t>();
        t.speaker = jt.at("speaker").get<std::string>() == "USER" ? Speaker::User : Speaker::System;
        t.utterance = jt.at("utterance").get<std::string>();
        d.turns.push_back(std::move(t));
    }
    if (j.contains("gold_turn_domains")) {
        std::vector<DomainSet> gd;
        for (const auto& s : j["gold_turn_domains"]) gd.push_back(s.get<DomainSet>());
        d.gold_turn_domains = std::move(gd);
    }
    if (j.contains("gold_states")) {
        std::vector<DialogueState> gs;
        for (const auto& s : j["gold_states"]) gs.push_back(state_from_json(s));
        d.gold_states = std::move(gs);
    }
    d.validate();
    return d;
}

} // namespace ovdst
