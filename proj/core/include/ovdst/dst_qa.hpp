#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovdst/dialogue.hpp"
#include "ovdst/gateway.hpp"
#include "ovdst/prompt_assets.hpp"

namespace ovdst {

struct ExtractedEntity {
    EntityType entity_type = EntityType::Name;
    std::string value;  // normalized, TIME as HH:MM
    std::size_t turn_index = 0;

    bool operator==(const ExtractedEntity&) const = default;
};

struct EntitySlotMatch {
    ExtractedEntity entity;
    std::vector<std::string> candidate_slots;  // qualified keys, schema order
};

struct McqQuestion {
    std::string slot_key;
    std::vector<std::string> options;  // always ends with "None"
    std::size_t turn_index = 0;
};

struct QaOptions {
    SamplingParams params;
    // Second extraction pass for DAY, TYPE and RANGE values.
    bool extended_entities = true;
    // Dedicated dontcare prompt per user turn.
    bool dontcare_scan = true;
};

struct QaTurnTrace {
    std::vector<ExtractedEntity> entities;
    std::vector<EntitySlotMatch> matches;
    std::set<std::string> dontcare;
    std::vector<McqQuestion> questions;
    std::map<std::string, std::optional<SlotValue>> answers;
    std::size_t extraction_requests = 0;
    std::size_t dontcare_requests = 0;
    std::size_t mcq_requests = 0;

    std::size_t total_requests() const { return extraction_requests + dontcare_requests + mcq_requests; }
    nlohmann::json to_json() const;
};

struct QaTurnResult {
    DialogueState delta;
    QaTurnTrace trace;
};

inline constexpr std::string_view kNoneOption = "None";
inline constexpr std::string_view kDontCareOption = "dontcare";

// Entity categories asked for by the base and the extended extraction prompts.
const std::vector<EntityType>& base_entity_types();
const std::vector<EntityType>& extended_entity_types();

// Parses a completion of an extraction prompt: a JSON object keyed by entity
// category, each holding a list (or a single value). Throws UnparseableResponse.
std::vector<ExtractedEntity> parse_entity_response(std::string_view raw, const std::vector<EntityType>& types,
                                                   std::size_t turn_index);

std::vector<ExtractedEntity> extract_entities(const Turn& turn, Gateway& gateway, const AssetLibrary& assets,
                                              const QaOptions& options = {});

// Candidates are the matchable schema slots with the entity's type whose
// domain is active. DONTCARE entities match every matchable active slot.
std::vector<EntitySlotMatch> match_entities_to_slots(const std::vector<ExtractedEntity>& entities,
                                                     const DomainSet& active_domains, const Schema& schema);

// Slot keys of the active domains the user said they have no preference for.
std::set<std::string> detect_dontcare(const Turn& turn, const DomainSet& active_domains, const Schema& schema,
                                      Gateway& gateway, const AssetLibrary& assets, const QaOptions& options = {});

// Options: entity values, then cross-references (informed prior values of
// other slots with the same entity type), then "dontcare", then "None".
McqQuestion build_mcq(const std::string& slot_key, const std::vector<std::string>& entity_values,
                      const DialogueState& prior_state, bool dontcare_flagged, const Schema& schema,
                      std::size_t turn_index = 0);

// "train.arrive-by" -> "train-arrive-by", the key the MCQ answer uses.
std::string mcq_answer_key(std::string_view slot_key);

// Maps an answer string onto the options. nullopt for "None" or anything
// outside the option list.
std::optional<SlotValue> interpret_mcq_answer(const McqQuestion& question, const nlohmann::json& answer);

std::string build_mcq_prompt(const McqQuestion& question, const std::vector<Turn>& dialogue_so_far,
                             const Schema& schema, const AssetLibrary& assets);

std::optional<SlotValue> answer_mcq(const McqQuestion& question, const std::vector<Turn>& dialogue_so_far,
                                    const Schema& schema, Gateway& gateway, const AssetLibrary& assets,
                                    const QaOptions& options = {});

// One user turn: extraction, matching, dontcare scan, one MCQ per slot with
// something to choose. The delta holds the non-absent answers.
QaTurnResult qa_track_turn(const Turn& turn, const std::vector<Turn>& history, const DomainSet& active_domains,
                           const DialogueState& prior_state, const Schema& schema, Gateway& gateway,
                           const AssetLibrary& assets, const QaOptions& options = {});

} // namespace ovdst
