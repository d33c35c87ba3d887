#pragma once

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

struct SrpRendering {
    std::string domain;
    std::string slot_block;   // one line per slot of the domain
    std::string regulations;  // the asset text the slot block is rendered into
    std::string model_key;
};

struct SrpOptions {
    std::string model = "gpt-4-turbo";
    bool with_ontology = false;
    SamplingParams params;
};

SrpRendering render_srp(std::string_view domain, const Schema& schema, const PromptAsset& asset,
                        bool with_ontology);

// dialogue_so_far ends with the user turn being tracked. prior_state feeds
// the block of values known from other domains when the asset asks the model
// to resolve cross-domain references.
// Throws MissingAsset, MissingOntology, SchemaMismatch.
PromptSpec build_srp_prompt(std::string_view domain, const Schema& schema, const AssetLibrary& assets,
                            const std::vector<Turn>& dialogue_so_far, const SrpOptions& options = {},
                            const DialogueState& prior_state = {});

struct SrpParse {
    DialogueState delta;  // includes Requested entries
    std::vector<std::string> dropped;  // keys dropped, with the reason
};

// "?" -> Requested, "*" -> DontCare, other text -> Informed(normalized).
// Unqualified keys resolve within `domain`. Throws UnparseableResponse.
SrpParse parse_srp_response(std::string_view raw, const std::set<std::string>& expected_slots,
                            std::string_view domain, const Schema& schema);

struct SrpTurnResult {
    DialogueState delta;       // scoring view, Requested removed
    DialogueState full_delta;  // as parsed, Requested kept
    std::size_t requests = 0;
    std::vector<std::string> failed_domains;
};

// One request per active domain; a failing domain contributes nothing.
SrpTurnResult srp_track_turn(const Turn& user_turn, const std::vector<Turn>& history,
                             const DomainSet& active_domains, const DialogueState& prior_state,
                             const Schema& schema, Gateway& gateway, const AssetLibrary& assets,
                             const SrpOptions& options = {});

} // namespace ovdst
