#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ovdst/dialogue.hpp"

namespace ovdst {

struct Corpus {
    std::string name;
    std::string version;
    std::vector<Dialogue> dialogues;
    Schema schema;
};

struct CorpusStats {
    std::uint64_t dialogue_count = 0;
    std::uint64_t turn_count = 0;  // user turns
    std::uint64_t slot_count = 0;
    std::uint64_t domain_count = 0;
    // Sum over user turns of |gold domains|.
    std::uint64_t turn_domain_total = 0;
    // Sum over user turns of the slot counts of that turn's gold domains.
    std::uint64_t turn_domain_slot_total = 0;
    double avg_domains_per_turn = 0.0;
    double avg_slots_per_domain = 0.0;
    // Per user-turn position: mean number of domains not seen earlier in the
    // dialogue, over dialogues that reach that position.
    std::vector<double> domain_change_profile;
    // Per user-turn position: mean number of distinct domains seen so far.
    std::vector<double> active_domain_profile;

    bool operator==(const CorpusStats&) const = default;
};

enum class MultiwozVersion { V21, V24 };

// Reads data.json plus optional testListFile.{txt,json} and ontology.json
// from a MultiWOZ release directory. Throws FormatError / SchemaMismatch.
Corpus load_multiwoz(const std::filesystem::path& dir, MultiwozVersion version);

// Reads schema.json and dialogues_*.json from an SGD split directory.
Corpus load_sgd(const std::filesystem::path& dir);

// Throws MissingGold when a dialogue lacks gold turn domains.
CorpusStats corpus_stats(const Corpus& corpus);

// Entity type guess for an SGD slot from its name and categorical values.
EntityType infer_sgd_entity_type(const std::string& slot_name, bool is_categorical,
                                 const std::vector<std::string>& possible_values);

// Normalized dump, one dialogue per line.
void write_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path);
std::vector<Dialogue> read_dialogues_jsonl(const std::filesystem::path& path);

nlohmann::json stats_to_json(const CorpusStats& stats);

} // namespace ovdst
