#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovdst/dialogue.hpp"

namespace ovdst {

inline constexpr double kDefaultFuzzyThreshold = 0.95;

// Lowercase, collapse whitespace, strip edge punctuation and a leading
// article, and map alias tokens ("center" -> "centre").
std::string canonical_value(std::string_view v);

// Equal after canonicalization, or edit similarity >= threshold. Symmetric,
// reflexive, not transitive.
bool fuzzy_match(std::string_view pred, std::string_view gold, double threshold = kDefaultFuzzyThreshold);

// DontCare only matches DontCare, Requested only Requested.
bool values_match(const SlotValue& pred, const SlotValue& gold, double threshold = kDefaultFuzzyThreshold);

// Same key set and every value pair matches.
bool states_match(const DialogueState& pred, const DialogueState& gold, double threshold = kDefaultFuzzyThreshold);

using StateSeq = std::vector<DialogueState>;
using DomainSeq = std::vector<DomainSet>;

// Turn-level lists aligned by user turn. Throws LengthMismatch. Empty input
// scores 1.0.
double jga(const StateSeq& pred, const StateSeq& gold, double threshold = kDefaultFuzzyThreshold);

struct AgaResult {
    double value = 1.0;
    std::size_t scored_turns = 0;
    std::size_t skipped_turns = 0;  // no active gold slots
};

// Per dialogue: active gold slots of a turn are the entries that changed
// against the previous gold state. Macro average over scored turns.
AgaResult aga_detail(const std::vector<StateSeq>& pred, const std::vector<StateSeq>& gold,
                     double threshold = kDefaultFuzzyThreshold);
double aga(const std::vector<StateSeq>& pred, const std::vector<StateSeq>& gold,
           double threshold = kDefaultFuzzyThreshold);
// Single dialogue.
double aga(const StateSeq& pred, const StateSeq& gold, double threshold = kDefaultFuzzyThreshold);

struct LabelScore {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    double precision() const { return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
    double recall() const { return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
};

struct DomainAccuracy {
    double accuracy = 1.0;  // exact set match per turn
    std::map<std::string, LabelScore> per_label;
};

DomainAccuracy domain_accuracy_detail(const DomainSeq& pred, const DomainSeq& gold);
double domain_accuracy(const DomainSeq& pred, const DomainSeq& gold);

struct PositionAccuracy {
    std::size_t position = 0;  // user-turn position within the dialogue
    double accuracy = 0.0;
    std::size_t count = 0;     // dialogues reaching this position
};

// Inputs nested per dialogue.
std::vector<PositionAccuracy> turn_position_accuracy(const std::vector<DomainSeq>& pred,
                                                     const std::vector<DomainSeq>& gold);

struct DomainMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<std::uint64_t>> counts;  // [gold][pred]

    std::uint64_t at(std::string_view gold, std::string_view pred) const;
    std::uint64_t total() const;
    std::string to_csv() const;
    nlohmann::json to_json() const;
};

// Cell (g, p) counts turns whose gold contains g and whose prediction
// contains p although p is not gold. Unknown labels are ignored.
DomainMatrix misclassification_matrix(const DomainSeq& pred, const DomainSeq& gold,
                                      const std::vector<std::string>& domains);

// One scored user turn.
struct TurnRecord {
    std::string dialogue_id;
    std::size_t turn_index = 0;  // position within the dialogue's turns
    DomainSet pred_domains;
    DomainSet gold_domains;
    DialogueState pred_state;
    DialogueState gold_state;

    nlohmann::json to_json() const;
    static TurnRecord from_json(const nlohmann::json& j);
};

// Records grouped by dialogue, turns in order.
std::vector<std::vector<TurnRecord>> group_by_dialogue(const std::vector<TurnRecord>& records);

struct EvalReport {
    double jga = 1.0;
    double aga = 1.0;
    double domain_accuracy = 1.0;
    std::map<std::string, LabelScore> domain_label_scores;
    std::map<std::string, double> per_domain_jga;
    std::map<std::string, double> per_slot_accuracy;
    std::vector<PositionAccuracy> turn_position_accuracy;
    std::vector<double> domain_change_profile;
    DomainMatrix misclassification_matrix;
    nlohmann::json request_ledger = nlohmann::json::object();
    nlohmann::json metadata = nlohmann::json::object();
    std::size_t dialogue_count = 0;
    std::size_t turn_count = 0;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
    std::string to_text_table() const;
};

// Scores every metric over the records. `domains` fixes the matrix labels;
// when empty the labels are collected from the records.
EvalReport evaluate(const std::vector<TurnRecord>& records, const std::vector<std::string>& domains = {},
                    double threshold = kDefaultFuzzyThreshold);

} // namespace ovdst
