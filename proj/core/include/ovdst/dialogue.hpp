#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ovdst {

enum class Speaker { User, System };

std::string_view to_string(Speaker s);

struct Turn {
    std::size_t index = 0;  // position within the dialogue, 0-based
    Speaker speaker = Speaker::User;
    std::string utterance;

    bool operator==(const Turn&) const = default;
};

using DomainSet = std::set<std::string>;

// Value of one tracked slot. DontCare serializes as "*", Requested as "?".
class SlotValue {
public:
    enum class Kind { Informed, DontCare, Requested };

    static SlotValue informed(std::string text);
    static SlotValue dont_care() { return SlotValue(Kind::DontCare, {}); }
    static SlotValue requested() { return SlotValue(Kind::Requested, {}); }

    // "*" -> DontCare, "?" -> Requested, anything else -> Informed(text).
    static SlotValue parse(std::string_view serialized);

    Kind kind() const noexcept { return kind_; }
    bool is_informed() const noexcept { return kind_ == Kind::Informed; }
    bool is_dont_care() const noexcept { return kind_ == Kind::DontCare; }
    bool is_requested() const noexcept { return kind_ == Kind::Requested; }

    // Informed text; empty for the two markers.
    const std::string& text() const noexcept { return text_; }
    std::string serialize() const;

    bool operator==(const SlotValue&) const = default;

private:
    SlotValue(Kind k, std::string t) : kind_(k), text_(std::move(t)) {}

    Kind kind_;
    std::string text_;
};

// Cumulative map from qualified key "domain.slot" to value.
class DialogueState {
public:
    using Map = std::map<std::string, SlotValue>;

    DialogueState() = default;
    explicit DialogueState(Map entries) : entries_(std::move(entries)) {}
    DialogueState(std::initializer_list<Map::value_type> init) : entries_(init) {}

    const Map& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t size() const noexcept { return entries_.size(); }
    bool contains(const std::string& key) const { return entries_.count(key) != 0; }
    const SlotValue* find(const std::string& key) const;

    void set(std::string key, SlotValue value);
    void erase(const std::string& key) { entries_.erase(key); }

    // Copy of this state restricted to keys of one domain.
    DialogueState restricted_to_domain(std::string_view domain) const;
    // Copy without Requested entries; the view used for scoring.
    DialogueState without_requested() const;

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    bool operator==(const DialogueState&) const = default;

private:
    Map entries_;
};

struct Dialogue {
    std::string id;
    std::vector<Turn> turns;
    // One entry per user turn when present.
    std::optional<std::vector<DomainSet>> gold_turn_domains;
    std::optional<std::vector<DialogueState>> gold_states;

    std::vector<std::size_t> user_turn_positions() const;
    std::size_t user_turn_count() const;

    // Checks index/speaker invariants and gold alignment; throws FormatError.
    void validate() const;
};

enum class EntityType { Time, Number, Price, Location, Name, Code, Boolean, Day, Type, Range, DontCare };

inline constexpr EntityType kAllEntityTypes[] = {
    EntityType::Time, EntityType::Number, EntityType::Price, EntityType::Location,
    EntityType::Name, EntityType::Code,   EntityType::Boolean, EntityType::Day,
    EntityType::Type, EntityType::Range,  EntityType::DontCare};

std::string_view to_string(EntityType t);
std::optional<EntityType> entity_type_from_string(std::string_view s);

struct SlotSchema {
    std::string name;         // lowercase hyphenated, e.g. "leave-at"
    std::string description;
    EntityType entity_type = EntityType::Name;
    std::vector<std::string> ontology;  // empty when the dataset lists no values
    // Whether the entity-slot matcher may target this slot.
    bool matchable = true;

    bool operator==(const SlotSchema&) const = default;
};

class Schema {
public:
    // Throws FormatError on duplicate domain, duplicate slot or bad names.
    void add_domain(std::string domain, std::vector<SlotSchema> slots);

    const std::vector<std::string>& domains() const noexcept { return domain_order_; }
    bool has_domain(std::string_view domain) const;
    const std::vector<SlotSchema>& slots(std::string_view domain) const;

    const SlotSchema* find_slot(std::string_view key) const;
    bool has_slot(std::string_view key) const { return find_slot(key) != nullptr; }

    std::vector<std::string> slot_keys() const;
    std::vector<std::string> slot_keys(std::string_view domain) const;
    std::size_t slot_count() const;
    bool has_ontology(std::string_view domain) const;

    // Mutable access for adapters attaching ontology lists after load.
    SlotSchema* find_slot_mut(std::string_view key);

    bool operator==(const Schema&) const = default;

private:
    std::vector<std::string> domain_order_;
    std::map<std::string, std::vector<SlotSchema>, std::less<>> slots_;
};

std::string make_key(std::string_view domain, std::string_view slot);
// Splits "domain.slot"; throws FormatError when there is no '.'.
std::pair<std::string, std::string> split_key(std::string_view key);

// Zero-padded 24-hour "HH:MM" for recognised time expressions; anything else
// is returned unchanged.
std::string normalize_time(std::string_view raw);

// Lowercase, collapse whitespace, strip edge punctuation, then normalize_time
// for TIME slots.
std::string normalize_value(std::string_view raw, EntityType type);

// Right-biased union. Throws UnknownSlot if a delta key is not in the schema.
DialogueState apply_turn_update(const DialogueState& state, const DialogueState& delta,
                                const Schema& schema);
// Unchecked right-biased union.
DialogueState merge_states(const DialogueState& state, const DialogueState& delta);

// Entries of next that are absent from prev or carry a different value.
DialogueState state_diff(const DialogueState& prev, const DialogueState& next);

nlohmann::json state_to_json(const DialogueState& state);
DialogueState state_from_json(const nlohmann::json& j);

nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);

nlohmann::json dialogue_to_json(const Dialogue& d);
Dialogue dialogue_from_json(const nlohmann::json& j);

nlohmann::json domains_to_json(const DomainSet& d);

} // namespace ovdst
