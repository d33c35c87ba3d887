#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ovdst/dialogue.hpp"
#include "ovdst/gateway.hpp"
#include "ovdst/prompt_assets.hpp"

namespace ovdst {

struct TurnDomainPrediction {
    std::size_t turn_index = 0;
    DomainSet domains;  // empty means the model answered None
    bool fallback = false;  // parse failed; domains copied from the previous user turn

    bool operator==(const TurnDomainPrediction&) const = default;
};

struct ClassifierOptions {
    SamplingParams params;
    // Character budget for the rendered history; oldest turns are dropped in
    // pairs once it is exceeded. 0 disables truncation.
    std::size_t max_history_chars = 0;
};

// Lines of the form "USER: ..." / "SYSTEM: ...".
std::string render_turns(const std::vector<Turn>& turns);

// Accepts {"domains": [...]}, {"domains": "None"}, a bare array, or "None".
// Unknown names are dropped with a warning. Throws UnparseableResponse.
DomainSet parse_domain_response(std::string_view raw, const Schema& schema);

std::string build_domain_prompt(const Turn& turn, const std::vector<Turn>& history, const Schema& schema,
                                const AssetLibrary& assets, const ClassifierOptions& options = {});

// history holds every turn before `turn`, in order. `previous` is the
// prediction for the preceding user turn; it is only consulted when the
// response cannot be parsed.
TurnDomainPrediction classify_turn(const Turn& turn, const std::vector<Turn>& history, const Schema& schema,
                                   Gateway& gateway, const AssetLibrary& assets,
                                   const std::optional<TurnDomainPrediction>& previous = std::nullopt,
                                   const ClassifierOptions& options = {});

} // namespace ovdst
